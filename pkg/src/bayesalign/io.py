"""File formats: PDB alpha-carbon traces, FASTA, pair lists, run configs and sample streams."""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .domain import AMINO_ACIDS, ConfigError, Configuration, Matching, MatchingError, ModelConfig, validate_matching
from .sampler import PosteriorSample

logger = logging.getLogger(__name__)

THREE_LETTER = {
    "ALA": "A", "CYS": "C", "ASP": "D", "GLU": "E", "PHE": "F", "GLY": "G", "HIS": "H",
    "ILE": "I", "LYS": "K", "LEU": "L", "MET": "M", "ASN": "N", "PRO": "P", "GLN": "Q",
    "ARG": "R", "SER": "S", "THR": "T", "VAL": "V", "TRP": "W", "TYR": "Y",
}
CODE = {a: i + 1 for i, a in enumerate(AMINO_ACIDS)}


class PdbError(ValueError):
    """Base class for PDB parsing failures."""


class ChainNotFoundError(PdbError):
    pass


class NoCAAtomsError(PdbError):
    pass


class MalformedRecordError(PdbError):
    pass


@dataclass(frozen=True)
class PdbTrace:
    configuration: Configuration
    residue_ids: tuple  # (resSeq, iCode) for each point
    skipped: tuple  # (resSeq, iCode, resName) of non-standard residues


def read_ca_trace(path, chain: str, model_index: int = 1) -> PdbTrace:
    """One point per standard residue: the CA atom of ``chain`` in the requested model.

    Columns follow the fixed-width ATOM layout. For alternate locations the
    lowest identifier wins (blank sorts first). HETATM records are ignored.
    """
    path = Path(path)
    current_model = 1
    saw_model = False
    chains_seen = set()
    residues: dict = {}
    order = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        rec = raw[:6]
        if rec == "MODEL ":
            try:
                current_model = int(raw[10:14])
            except ValueError as exc:
                raise MalformedRecordError(f"line {lineno}: bad MODEL serial") from exc
            saw_model = True
            continue
        if rec == "ENDMDL" and current_model == model_index:
            break
        if rec != "ATOM  " or (saw_model and current_model != model_index):
            continue
        if len(raw) < 54:
            raise MalformedRecordError(f"line {lineno}: ATOM record shorter than 54 columns")
        chain_id = raw[21]
        chains_seen.add(chain_id)
        if chain_id != chain or raw[12:16].strip() != "CA":
            continue
        try:
            res_seq = int(raw[22:26])
            xyz = (float(raw[30:38]), float(raw[38:46]), float(raw[46:54]))
        except ValueError as exc:
            raise MalformedRecordError(f"line {lineno}: unreadable residue number or coordinates") from exc
        key = (res_seq, raw[26].strip())
        alt = raw[16].strip()
        entry = (alt, raw[17:20].strip(), xyz)
        if key not in residues:
            residues[key] = entry
            order.append(key)
        elif alt < residues[key][0]:
            residues[key] = entry
    if chain not in chains_seen:
        raise ChainNotFoundError(f"chain {chain!r} not found in {path.name}")
    if not order:
        raise NoCAAtomsError(f"chain {chain!r} of {path.name} has no CA atoms")
    points, codes, ids, skipped = [], [], [], []
    for key in order:
        _, name, xyz = residues[key]
        letter = THREE_LETTER.get(name)
        if letter is None:
            skipped.append((*key, name))
            logger.warning("skipping non-standard residue %s %d%s", name, key[0], key[1])
            continue
        points.append(xyz)
        codes.append(CODE[letter])
        ids.append(key)
    if not points:
        raise NoCAAtomsError(f"chain {chain!r} of {path.name} has no standard residues")
    conf = Configuration(np.array(points), np.array(codes), f"{path.stem}:{chain}")
    return PdbTrace(conf, tuple(ids), tuple(skipped))


def parse_pdb(path, chain: str, model_index: int = 1) -> Configuration:
    return read_ca_trace(path, chain, model_index).configuration


def format_configuration(conf: Configuration) -> str:
    """Canonical text dump, one point per line."""
    seq = conf.sequence or "-" * len(conf)
    return "".join(f"{i} {seq[i - 1]} {x!r} {y!r} {z!r}\n"
                   for i, (x, y, z) in enumerate(conf.points.tolist(), start=1))


def parse_fasta(text: str) -> list[tuple[str, str]]:
    records = []
    name, chunks = None, []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith(">"):
            if name is not None:
                records.append((name, "".join(chunks)))
            name, chunks = line[1:].strip(), []
        elif name is None:
            raise ValueError("FASTA sequence data before the first header")
        else:
            chunks.append(line.upper())
    if name is not None:
        records.append((name, "".join(chunks)))
    return records


def sequence_codes(seq: str) -> np.ndarray:
    bad = sorted(set(seq) - set(AMINO_ACIDS))
    if bad:
        raise ValueError(f"unsupported residue letters: {''.join(bad)}")
    return np.array([CODE[a] for a in seq], dtype=int)


def parse_initial_matching(path, m: int, n: int) -> Matching:
    """Read ``j k`` pairs (1-based), one per line; ``#`` starts a comment."""
    pairs, lines = [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        parts = text.replace(",", " ").split()
        if len(parts) != 2:
            raise MatchingError(f"line {lineno}: expected two indices, got {text!r}")
        try:
            pairs.append((int(parts[0]), int(parts[1])))
        except ValueError as exc:
            raise MatchingError(f"line {lineno}: indices must be integers") from exc
        lines.append(lineno)
    mt = Matching(tuple(pairs), m, n)
    report = validate_matching(mt)
    if report is not None:
        where = lines[report.position - 1] if 1 <= report.position <= len(lines) else lines[-1]
        raise MatchingError(f"line {where}: {report.message}")
    return mt


def write_matching(path, mt: Matching):
    Path(path).write_text("".join(f"{j} {k}\n" for j, k in mt.pairs))


# ---------------------------------------------------------------- configs

_OPTIONAL_AUTO = {"mu_tau", "moves_per_sweep"}


def _format_value(name: str, value) -> str:
    if value is None:
        return "auto"
    if name == "prior_F0":
        return " ".join(repr(a) for row in value for a in row)
    if isinstance(value, tuple):
        return " ".join(repr(a) for a in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def _parse_value(name: str, text: str, default):
    if name in _OPTIONAL_AUTO and text == "auto":
        return None
    toks = text.replace(",", " ").split()
    if name == "prior_F0":
        vals = [float(t) for t in toks]
        if len(vals) != 9:
            raise ConfigError("prior_F0 needs nine numbers (row-major)")
        return tuple(tuple(vals[i:i + 3]) for i in (0, 3, 6))
    if name in ("mu_tau", "temperatures"):
        return tuple(float(t) for t in toks)
    if name == "pam_distances":
        return tuple(int(t) for t in toks)
    if isinstance(default, bool):
        if text.lower() not in ("true", "false"):
            raise ConfigError(f"{name} must be true or false")
        return text.lower() == "true"
    if name in ("sweeps", "burn_in", "thin", "grid_n", "pam_l", "seed", "moves_per_sweep"):
        return int(text.replace("_", ""))
    if isinstance(default, str):
        return text
    return float(text)


def parse_config(text: str, base: Optional[ModelConfig] = None) -> ModelConfig:
    """``key = value`` lines over the ModelConfig fields; unknown keys are errors."""
    base = base or ModelConfig()
    known = {f.name for f in dataclasses.fields(ModelConfig)}
    changes = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            changes[key] = _parse_value(key, value, getattr(base, key))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from exc
    return base.replace(**changes)


def load_config(path, base: Optional[ModelConfig] = None) -> ModelConfig:
    return parse_config(Path(path).read_text(), base)


def dump_config(cfg: ModelConfig) -> str:
    return "".join(f"{f.name} = {_format_value(f.name, getattr(cfg, f.name))}\n"
                   for f in dataclasses.fields(cfg))


# ---------------------------------------------------------------- samples

SAMPLE_COLUMNS = ("sweep", "logpost", "L", "rmsd", "S", "ext", "g", "h", "l",
                  "theta12", "theta13", "theta23", "tau_x", "tau_y", "tau_z", "sigma", "pairs")


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x)) if isinstance(x, float) else str(x)


def write_samples(path, samples: Iterable[PosteriorSample]) -> int:
    count = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SAMPLE_COLUMNS)
        for s in samples:
            w.writerow([s.sweep, _fmt(s.log_post), s.L, _fmt(s.rmsd), s.s, s.ext, _fmt(s.g), _fmt(s.h),
                        _fmt(s.pam_l), *(_fmt(a) for a in s.euler), *(_fmt(a) for a in s.tau),
                        _fmt(s.sigma), ";".join(f"{j}:{k}" for j, k in s.pairs)])
            count += 1
    return count


def read_samples(path) -> list[PosteriorSample]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            pairs = tuple(tuple(int(i) for i in p.split(":")) for p in row["pairs"].split(";") if p)
            out.append(PosteriorSample(
                sweep=int(row["sweep"]), log_post=float(row["logpost"]), L=int(row["L"]),
                rmsd=float(row["rmsd"]), s=int(row["S"]), ext=int(row["ext"]),
                g=float(row["g"]), h=float(row["h"]),
                pam_l=int(row["l"]) if row["l"] else None, pairs=pairs,
                euler=tuple(float(row[c]) for c in ("theta12", "theta13", "theta23")),
                tau=tuple(float(row[c]) for c in ("tau_x", "tau_y", "tau_z")),
                sigma=float(row["sigma"])))
    return out


def json_safe(obj):
    """Replace non-finite floats with None so the output is strict JSON."""
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj
