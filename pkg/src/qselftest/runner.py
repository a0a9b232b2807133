"""Experiment orchestration: config in, report out.

A run takes every configured state through

    prepare -> noise -> Bell table -> self-test -> tomography -> comparison
    -> no-signalling check

and, with ``local_unitaries.count > 0``, repeats the self-test on states
rotated by Haar-random local unitaries whose settings are rotated along.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from . import highdim, noise, tiltedchsh, tomo
from .bell import CorrelationTable, born_table, check_no_signalling
from .qcore import SchmidtState, StateError, kron, purity, target_ket
from .tiltedchsh import QubitSettings

log = logging.getLogger(__name__)

CONFIG_SCHEMA_ID = "qselftest/config-v1"
REPORT_SCHEMA_ID = "qselftest/report-v1"

_NOISE_SCHEMA = {
    "type": "object",
    "properties": {
        "white_noise_v": {"type": "number", "minimum": 0, "maximum": 1},
        "dephasing_lambda": {"type": "number", "minimum": 0, "maximum": 1},
        "samples_per_setting": {
            "oneOf": [{"const": "exact"}, {"type": "integer", "minimum": 1}]
        },
        "target_purity": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
    },
    "not": {"required": ["white_noise_v", "target_purity"]},
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["kind", "states"],
    "properties": {
        "$schema": {"const": CONFIG_SCHEMA_ID},
        "kind": {"enum": ["qubit", "qudit"]},
        "d": {"enum": [2, 3, 4]},
        "seed": {"type": "integer", "minimum": 0},
        "noise": _NOISE_SCHEMA,
        "local_unitaries": {
            "type": "object",
            "properties": {
                "count": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "reoptimize": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "extraction": {
            "type": "object",
            "properties": {"pairing_mode": {"enum": ["primary", "least_squares"]}},
            "additionalProperties": False,
        },
        "outputs": {
            "type": "object",
            "properties": {
                "dir": {"type": "string"},
                "stem": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["json", "csv"]}},
            },
            "additionalProperties": False,
        },
        "include_timing": {"type": "boolean"},
        "states": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "name": {"type": "string"},
                    "theta": {"type": "number", "minimum": 0, "maximum": math.pi / 4 + 1e-12},
                    "coeffs": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 2},
                    "noise": _NOISE_SCHEMA,
                },
                "oneOf": [{"required": ["theta"]}, {"required": ["coeffs"]}],
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


class NumericError(RuntimeError):
    """Numerical failure during a run (CLI exit code 3)."""


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    d: int
    states: tuple[dict, ...]
    seed: int = 0
    noise: dict | None = None
    lu_count: int = 0
    lu_seed: int = 0
    reoptimize: bool = False
    pairing_mode: str = "primary"
    out_dir: str = "."
    stem: str = "report"
    formats: tuple[str, ...] = ("json", "csv")
    include_timing: bool = False

    def echo(self) -> dict:
        return {
            "$schema": CONFIG_SCHEMA_ID,
            "kind": self.kind,
            "d": self.d,
            "seed": self.seed,
            "noise": self.noise or {},
            "local_unitaries": {"count": self.lu_count, "seed": self.lu_seed, "reoptimize": self.reoptimize},
            "extraction": {"pairing_mode": self.pairing_mode},
            "states": list(self.states),
        }


def parse_config(data: dict) -> ExperimentConfig:
    """Validate a raw config dict and normalize its states."""
    try:
        jsonschema.validate(data, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {exc.message}") from None

    kind = data["kind"]
    d = data.get("d", 2 if kind == "qubit" else None)
    if kind == "qubit" and d != 2:
        raise ConfigError("qubit experiments have d = 2")
    if kind == "qudit" and d not in (3, 4):
        raise ConfigError("qudit experiments need d = 3 or 4")

    states = []
    for i, st in enumerate(data["states"]):
        st = dict(st)
        st.setdefault("name", f"state{i}")
        if kind == "qubit":
            if "theta" not in st:
                raise ConfigError(f"states/{i}: qubit states need theta")
        else:
            if "coeffs" not in st:
                raise ConfigError(f"states/{i}: qudit states need coeffs")
            c = np.asarray(st["coeffs"], dtype=float)
            if len(c) != d:
                raise ConfigError(f"states/{i}: expected {d} coefficients, got {len(c)}")
            norm = float(np.linalg.norm(c))
            if norm == 0:
                raise ConfigError(f"states/{i}: coefficients are all zero")
            if abs(norm - 1.0) > 1e-6:
                log.warning("state %s: coefficients renormalized (norm was %.9g)", st["name"], norm)
            st["coeffs"] = (c / norm).tolist()
        if "noise" in st:
            _noise_spec(st["noise"])
        states.append(st)
    _noise_spec(data.get("noise"))

    lu = data.get("local_unitaries", {})
    outs = data.get("outputs", {})
    return ExperimentConfig(
        kind=kind,
        d=d,
        states=tuple(states),
        seed=data.get("seed", 0),
        noise=data.get("noise"),
        lu_count=lu.get("count", 0),
        lu_seed=lu.get("seed", 0),
        reoptimize=lu.get("reoptimize", False),
        pairing_mode=data.get("extraction", {}).get("pairing_mode", "primary"),
        out_dir=outs.get("dir", "."),
        stem=outs.get("stem", "report"),
        formats=tuple(outs.get("formats", ("json", "csv"))),
        include_timing=data.get("include_timing", False),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return parse_config(data)


def _noise_spec(data: dict | None) -> noise.NoiseSpec:
    try:
        return noise.NoiseSpec.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"noise: {exc}") from None


def derive_seed(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1, np.uint32)[0])


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary: QR of a complex Gaussian matrix, R's diagonal phases removed."""
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def local_unitary_pairs(dim: int, count: int, seed: int, state_index: int) -> list[tuple[np.ndarray, np.ndarray]]:
    out = []
    for k in range(count):
        rng = noise.make_rng(seed, state_index, k)
        out.append((haar_unitary(dim, rng), haar_unitary(dim, rng)))
    return out


def _table(rho, settings, spec: noise.NoiseSpec, seed: int) -> CorrelationTable:
    exact = born_table(rho, settings.alice, settings.bob)
    if spec.exact:
        return exact
    return noise.sample_counts(exact, spec.samples_per_setting, seed)


def _tomography(rho: np.ndarray, d: int, spec: noise.NoiseSpec, seed: int) -> dict:
    basis = tomo.tomo_projectors(d)
    probs = tomo.tomography_probabilities(rho, basis)
    if not spec.exact:
        probs = tomo.sample_tomography(probs, spec.samples_per_setting, seed)
    fit = tomo.fit_density(probs, d)
    readout = tomo.schmidt_readout(fit.rho, d)
    return {
        "measurements": basis.joint_count,
        "gram_condition": basis.condition_number,
        "projection_distance": fit.projection_distance,
        "purity": purity(fit.rho),
        "readout": readout.to_dict(),
        "rho": tomo.density_to_dict(fit.rho),
    }


def _qubit_selftest(rho, settings: QubitSettings, theta_true: float, spec, seed, reoptimize=False) -> dict:
    if reoptimize:
        found = tiltedchsh.reoptimized_extraction(rho, seed=seed)
        settings, table, ext = found.settings, found.table, found.extraction
        if not spec.exact:
            table = noise.sample_counts(table, spec.samples_per_setting, seed)
            ext = tiltedchsh.extract_theta(table)
    else:
        table = _table(rho, settings, spec, seed)
        ext = tiltedchsh.extract_theta(table)
    try:
        f_s = tiltedchsh.swap_fidelity(rho, settings, ext.theta, None if reoptimize else settings.mu)
    except ValueError:
        f_s = None
    overlap = abs(np.vdot(target_ket(ext.theta), target_ket(theta_true))) ** 2
    return {
        "extraction": {**ext.to_dict(), "F_S": f_s},
        "theta_selftest": ext.theta,
        "theta_standard_error": tiltedchsh.theta_standard_error(table),
        "fidelity_vs_true": float(overlap),
        "no_signalling": check_no_signalling(table).to_dict(),
        "table": table.to_dict(),
    }


def _qudit_selftest(rho, settings, state: SchmidtState, d, spec, seed, mode) -> dict:
    table = _table(rho, settings, spec, seed)
    est = highdim.reconstruct_coefficients(table, d, mode=mode, reference=state)
    return {
        "reconstruction": est.to_dict(),
        "coeffs_selftest": list(est.coeffs),
        "fidelity_vs_true": est.fidelity_vs_reference,
        "no_signalling": check_no_signalling(table).to_dict(),
        "table": table.to_dict(),
    }


def _conjugate_qudit(settings: highdim.QuditSettings, u_a, u_b) -> highdim.QuditSettings:
    return highdim.QuditSettings(
        [m.conjugated(u_a) for m in settings.alice],
        [m.conjugated(u_b) for m in settings.bob],
        settings.pairings,
        settings.tilts,
        settings.degenerate_blocks,
    )


def run_state(cfg: ExperimentConfig, index: int, st: dict) -> dict:
    spec = _noise_spec({**(cfg.noise or {}), **st.get("noise", {})})
    d = cfg.d
    if cfg.kind == "qubit":
        theta = float(st["theta"])
        ideal = np.outer(target_ket(theta), target_ket(theta).conj())
        settings = tiltedchsh.optimal_settings(theta)
        state = None
    else:
        state = SchmidtState.normalized(st["coeffs"])
        ideal = state.rho
        settings = highdim.build_qudit_settings(state)
    rho = noise.apply_noise(ideal, spec)

    record: dict[str, Any] = {
        "name": st["name"],
        "kind": cfg.kind,
        "d": d,
        "input": st,
        "noise": spec.to_dict(),
        "purity": purity(rho),
    }
    seed = derive_seed(cfg.seed, index)
    if cfg.kind == "qubit":
        record["theta_true"] = theta
        record.update(_qubit_selftest(rho, settings, theta, spec, seed))
    else:
        record["coeffs_true"] = list(state.coeffs)
        record.update(_qudit_selftest(rho, settings, state, d, spec, seed, cfg.pairing_mode))
    record["tomography"] = _tomography(rho, d, spec, derive_seed(cfg.seed, index, 0xD1A))

    variants = []
    for k, (u_a, u_b) in enumerate(local_unitary_pairs(d, cfg.lu_count, cfg.lu_seed, index)):
        u = kron(u_a, u_b)
        rho_k = u @ rho @ u.conj().T
        vseed = derive_seed(cfg.seed, index, k + 1)
        if cfg.kind == "qubit":
            res = _qubit_selftest(rho_k, settings.conjugated(u_a, u_b), theta, spec, vseed, cfg.reoptimize)
        else:
            res = _qudit_selftest(rho_k, _conjugate_qudit(settings, u_a, u_b), state, d, spec, vseed, cfg.pairing_mode)
        res.pop("table")
        variants.append({"index": k, **res})
    record["variants"] = variants
    return record


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run every configured state; deterministic given the config."""
    records = []
    for i, st in enumerate(cfg.states):
        t0 = time.perf_counter()
        try:
            rec = run_state(cfg, i, st)
        except (np.linalg.LinAlgError, FloatingPointError, StateError) as exc:
            raise NumericError(f"state {st.get('name', i)}: {exc}") from exc
        if cfg.include_timing:
            rec["timing_s"] = time.perf_counter() - t0
        records.append(rec)
    report = {"schema": REPORT_SCHEMA_ID, "config": cfg.echo(), "records": records}
    bad = _non_finite_paths(report)
    if bad:
        raise NumericError(f"non-finite values in report at {', '.join(bad[:5])}")
    return report


def _non_finite_paths(obj, path="") -> list[str]:
    if isinstance(obj, float):
        return [] if math.isfinite(obj) else [path or "<root>"]
    if isinstance(obj, dict):
        return [p for k, v in obj.items() for p in _non_finite_paths(v, f"{path}/{k}")]
    if isinstance(obj, list):
        return [p for i, v in enumerate(obj) for p in _non_finite_paths(v, f"{path}/{i}")]
    return []


# -- report rendering ------------------------------------------------------

def report_to_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=1, allow_nan=False) + "\n"


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def report_csv_rows(report: dict) -> tuple[list[str], list[list[str]]]:
    """Flat table: one row per state, Fig.-3 or Fig.-4 shaped."""
    cfg = report["config"]
    kind, d = cfg["kind"], cfg["d"]
    n_var = cfg.get("local_unitaries", {}).get("count", 0)
    if kind == "qubit":
        if n_var:
            header = ["name", "purity", "theta_true", "theta_tomo"]
            header += [f"theta_k{k:02d}" for k in range(n_var)]
            header += ["min_fidelity_vs_true", "max_gap", "min_F_S"]
        else:
            header = [
                "name", "purity", "theta_true", "theta_tomo", "theta_selftest",
                "alpha0", "gap", "F_S", "fidelity_vs_true", "ns_pass",
            ]
    else:
        header = ["name", "purity"]
        header += [f"c{i}_tomo" for i in range(d)] + [f"c{i}_selftest" for i in range(d)]
        header += ["residual", "fidelity_vs_true", "ns_pass"]
        if n_var:
            header += ["min_variant_fidelity"]

    rows = []
    for rec in report["records"]:
        tomo_rd = rec["tomography"]["readout"]
        if kind == "qubit":
            ext = rec["extraction"]
            if n_var:
                vs = rec["variants"]
                fs = [v["extraction"]["F_S"] for v in vs if v["extraction"]["F_S"] is not None]
                row = [rec["name"], rec["purity"], rec["theta_true"], tomo_rd["theta"]]
                row += [v["theta_selftest"] for v in vs]
                row += [
                    min(v["fidelity_vs_true"] for v in vs),
                    max(v["extraction"]["gap"] for v in vs),
                    min(fs) if fs else None,
                ]
            else:
                row = [
                    rec["name"], rec["purity"], rec["theta_true"], tomo_rd["theta"], rec["theta_selftest"],
                    ext["alpha0"], ext["gap"], ext["F_S"], rec["fidelity_vs_true"],
                    rec["no_signalling"]["pass"],
                ]
        else:
            recon = rec["reconstruction"]
            row = [rec["name"], rec["purity"], *tomo_rd["coeffs"], *rec["coeffs_selftest"]]
            row += [recon["consistency_residual"], rec["fidelity_vs_true"], rec["no_signalling"]["pass"]]
            if n_var:
                row += [min(v["fidelity_vs_true"] for v in rec["variants"])]
        rows.append([_fmt(x) for x in row])
    return header, rows


def report_to_csv(report: dict) -> str:
    header, rows = report_csv_rows(report)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def emit_report(report: dict, formats=("json", "csv"), out_dir: str | Path = ".", stem: str = "report") -> list[Path]:
    """Write the report files; raises OSError on I/O failure."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for fmt in formats:
        if fmt == "json":
            text = report_to_json(report)
        elif fmt == "csv":
            text = report_to_csv(report)
        else:
            raise ValueError(f"unknown format {fmt!r}")
        path = out / f"{stem}.{fmt}"
        with open(path, "w", newline="") as fh:
            fh.write(text)
        written.append(path)
    return written


def load_report(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
