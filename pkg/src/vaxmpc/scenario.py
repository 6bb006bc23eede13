"""Scenario configuration, contact-matrix loading, metrics and reporting.

Configs are JSON.  A config either spells out every field or names a preset
and overrides selected fields::

    {"preset": "wallonia-2020", "policy": "national",
     "mpc": {"rng_seed": 7}}

The ``wallonia-2020`` preset carries the six-group Walloon population,
calibrated rates and initial infections, a daily capacity of 55191 doses,
horizon 40, epsilon 0.1, vaccination start day 61 and a 140-day simulation.
Its contact matrix is the bundled synthetic 6x6 test matrix
(``builtin:synthetic-6x6``): raw per-person daily contact rates, reciprocal
in total contact events, diagonally dominant, and scaled so the worst-case
one-day infection pressure stays below one.  It is a stand-in constructed
for reproducible tests, not survey data.

Outputs per run: ``trajectory.csv`` (day, group, S, I, R, D, applied_u),
``metrics.json`` and, for predictive runs, ``diagnostics.jsonl`` with one
record per day.  All writers are deterministic byte for byte.
"""

from __future__ import annotations

import importlib.resources
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import mpc as mpc_mod
from .errors import ContractViolation, ValidationError
from .model import EpidemicState, ModelParams, initial_state
from .results import ScenarioResult

BUILTIN_MATRIX = "builtin:synthetic-6x6"

#: Table of per-group simulation parameters for the Walloon first wave:
#: populations, transmission probabilities, recovery/death rates and the
#: initial infected seeding, groups ordered youngest to oldest.
WALLONIA_2020 = {
    "name": "wallonia-2020",
    "age_groups": ["0-24", "25-44", "45-64", "65-74", "75-84", "85+"],
    "model": {
        "lambda": [
            0.0769924521,
            0.0290873349,
            0.0136872530,
            0.1149749309,
            0.2326289564,
            0.3331837058,
        ],
        "gamma_r": [
            0.9216927886,
            0.7230105996,
            0.5707245171,
            0.8482912034,
            0.8200428486,
            0.6612236351,
        ],
        "gamma_d": [
            0.0004407167,
            0.0018303543,
            0.0232746601,
            0.0397484004,
            0.1006921381,
            0.1514435560,
        ],
        "population": [1058304, 915796, 983789, 384803, 203035, 99516],
    },
    "i0": [
        4.6595088243,
        4.3296088874,
        4.8417769521,
        0.1709101349,
        1.4936938584,
        1.6144863665,
    ],
    "contact_matrix_path": BUILTIN_MATRIX,
    "contact_matrix_is_raw": True,
    "policy": "mpc",
    "mpc": {
        "horizon": 40,
        "epsilon": 0.1,
        "v_bar": 55191.0,
        "eradication_threshold": 1.0,
        "strategy_horizon": 140,
        "vaccination_start_day": 61,
    },
}

PRESETS = {"wallonia-2020": WALLONIA_2020}

_MPC_FIELDS = {
    "horizon",
    "epsilon",
    "v_bar",
    "eradication_threshold",
    "strategy_horizon",
    "vaccination_start_day",
    "max_iterations",
    "step_tolerance",
    "cost_tolerance",
    "terminal_mode",
    "penalty_weight",
    "rng_seed",
    "n_restarts",
}


@dataclass(frozen=True)
class ScenarioConfig:
    """A fully resolved scenario: model, matrix source, policy and controller."""

    name: str
    lam: tuple
    gamma_r: tuple
    gamma_d: tuple
    population: tuple
    i0: tuple
    contact_matrix_path: str
    contact_matrix_is_raw: bool
    policy: str
    mpc: mpc_mod.MpcConfig
    age_groups: tuple | None = None
    output_dir: str | None = None
    base_dir: str | None = None

    @property
    def n_a(self) -> int:
        return len(self.lam)

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "model": {
                "lambda": list(self.lam),
                "gamma_r": list(self.gamma_r),
                "gamma_d": list(self.gamma_d),
                "population": list(self.population),
            },
            "i0": list(self.i0),
            "contact_matrix_path": self.contact_matrix_path,
            "contact_matrix_is_raw": self.contact_matrix_is_raw,
            "policy": self.policy,
            "mpc": asdict(self.mpc),
        }
        if isinstance(out["mpc"]["eradication_threshold"], np.ndarray):
            out["mpc"]["eradication_threshold"] = list(
                out["mpc"]["eradication_threshold"]
            )
        if self.age_groups:
            out["age_groups"] = list(self.age_groups)
        if self.output_dir:
            out["output_dir"] = self.output_dir
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def build_params(self) -> ModelParams:
        contact = load_contact_matrix(
            self.contact_matrix_path,
            self.contact_matrix_is_raw,
            np.asarray(self.population, dtype=float),
            base_dir=self.base_dir,
        )
        return ModelParams(
            lam=np.asarray(self.lam, dtype=float),
            gamma_r=np.asarray(self.gamma_r, dtype=float),
            gamma_d=np.asarray(self.gamma_d, dtype=float),
            population=np.asarray(self.population, dtype=float),
            contact=contact,
        )

    def build_initial_state(self, params: ModelParams) -> EpidemicState:
        return initial_state(params, np.asarray(self.i0, dtype=float))

    def fingerprint(self) -> str:
        """Digest of everything two comparable runs must share."""
        import hashlib

        payload = json.dumps(
            {
                "model": self.to_dict()["model"],
                "i0": list(self.i0),
                "contact_matrix_path": self.contact_matrix_path,
                "contact_matrix_is_raw": self.contact_matrix_is_raw,
                "v_bar": self.mpc.v_bar,
                "vaccination_start_day": self.mpc.vaccination_start_day,
                "strategy_horizon": self.mpc.strategy_horizon,
                "eradication_threshold": np.broadcast_to(
                    np.asarray(self.mpc.eradication_threshold, dtype=float),
                    (self.n_a,),
                ).tolist(),
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _require(condition: bool, path: str, message: str) -> None:
    if not condition:
        raise ValidationError(f"{path}: {message}")


def _vector(raw, n: int | None, path: str) -> tuple:
    _require(isinstance(raw, (list, tuple)), path, "expected a list of numbers")
    _require(
        all(isinstance(x, (int, float)) and np.isfinite(x) for x in raw),
        path,
        "entries must be finite numbers",
    )
    if n is not None:
        _require(len(raw) == n, path, f"expected {n} entries, got {len(raw)}")
    return tuple(float(x) for x in raw)


def config_from_dict(data: dict, base_dir: str | None = None) -> ScenarioConfig:
    """Validate a parsed config dict (with optional preset) into a config."""
    if not isinstance(data, dict):
        raise ValidationError("config root must be a JSON object")
    merged: dict = {}
    preset_name = data.get("preset")
    if preset_name is not None:
        preset = PRESETS.get(preset_name)
        _require(preset is not None, "preset", f"unknown preset {preset_name!r}")
        merged = json.loads(json.dumps(preset))  # deep copy
    for key, value in data.items():
        if key == "preset":
            continue
        if key in ("model", "mpc") and isinstance(value, dict):
            merged.setdefault(key, {}).update(value)
        else:
            merged[key] = value

    known = {
        "name",
        "age_groups",
        "model",
        "i0",
        "contact_matrix_path",
        "contact_matrix_is_raw",
        "policy",
        "mpc",
        "output_dir",
    }
    for key in merged:
        _require(key in known, key, "unknown configuration field")

    model = merged.get("model")
    _require(isinstance(model, dict), "model", "missing model section")
    for fld in ("lambda", "gamma_r", "gamma_d", "population"):
        _require(fld in model, f"model.{fld}", "missing required field")
    lam = _vector(model["lambda"], None, "model.lambda")
    n = len(lam)
    _require(n > 0, "model.lambda", "needs at least one age group")
    gamma_r = _vector(model["gamma_r"], n, "model.gamma_r")
    gamma_d = _vector(model["gamma_d"], n, "model.gamma_d")
    population = _vector(model["population"], n, "model.population")
    i0 = _vector(merged.get("i0", [0.0] * n), n, "i0")

    matrix_path = merged.get("contact_matrix_path")
    _require(
        isinstance(matrix_path, str) and matrix_path,
        "contact_matrix_path",
        "missing contact matrix path",
    )
    policy = merged.get("policy", "none")
    _require(
        policy in ("none", "national", "mpc"),
        "policy",
        f"must be one of none|national|mpc, got {policy!r}",
    )

    mpc_raw = dict(merged.get("mpc", {}))
    for key in mpc_raw:
        _require(key in _MPC_FIELDS, f"mpc.{key}", "unknown controller field")
    if isinstance(mpc_raw.get("eradication_threshold"), list):
        mpc_raw["eradication_threshold"] = tuple(mpc_raw["eradication_threshold"])
    try:
        mpc_cfg = mpc_mod.MpcConfig(**mpc_raw)
        mpc_cfg.validate()
    except TypeError as exc:
        raise ValidationError(f"mpc: {exc}") from exc

    age_groups = merged.get("age_groups")
    if age_groups is not None:
        _require(
            isinstance(age_groups, list) and len(age_groups) == n,
            "age_groups",
            f"expected {n} labels",
        )
        age_groups = tuple(str(x) for x in age_groups)

    return ScenarioConfig(
        name=str(merged.get("name", preset_name or "scenario")),
        lam=lam,
        gamma_r=gamma_r,
        gamma_d=gamma_d,
        population=population,
        i0=i0,
        contact_matrix_path=matrix_path,
        contact_matrix_is_raw=bool(merged.get("contact_matrix_is_raw", False)),
        policy=policy,
        mpc=mpc_cfg,
        age_groups=age_groups,
        output_dir=merged.get("output_dir"),
        base_dir=base_dir,
    )


def load_config(path: str | Path) -> ScenarioConfig:
    """Read and validate a JSON scenario config from disk."""
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data, base_dir=str(path.parent))


def get_preset(name: str) -> ScenarioConfig:
    """Resolve a named preset into a full config."""
    return config_from_dict({"preset": name})


def load_contact_matrix(
    path: str,
    raw: bool,
    population: np.ndarray,
    base_dir: str | None = None,
) -> np.ndarray:
    """Load an n_a x n_a contact matrix from CSV; normalize if raw.

    A raw matrix holds per-person daily contact rates; dividing column j by
    the population of group j converts it to the per-capita form the
    dynamics expect.  ``builtin:`` paths resolve to matrices bundled with
    the package.
    """
    n = population.shape[0]
    if path == BUILTIN_MATRIX:
        resource = (
            importlib.resources.files("vaxmpc") / "data" / "synthetic_contacts_6x6.csv"
        )
        text = resource.read_text(encoding="utf-8")
        rows = _parse_matrix_csv(text, path)
    elif path.startswith("builtin:"):
        raise ValidationError(f"unknown builtin contact matrix {path!r}")
    else:
        full = Path(path)
        if base_dir is not None and not full.is_absolute():
            full = Path(base_dir) / full
        if not full.exists():
            raise FileNotFoundError(f"contact matrix file not found: {full}")
        rows = _parse_matrix_csv(full.read_text(encoding="utf-8"), str(full))
    matrix = np.array(rows, dtype=float)
    if matrix.shape != (n, n):
        raise ValidationError(
            f"contact matrix {path}: expected shape ({n}, {n}), got {matrix.shape}"
        )
    if not np.all(np.isfinite(matrix)) or np.any(matrix < 0):
        raise ValidationError(
            f"contact matrix {path}: entries must be finite and nonnegative"
        )
    if raw:
        if np.any(population <= 0):
            raise ValidationError("populations must be positive to normalize")
        matrix = matrix / population[None, :]
    return matrix


def _parse_matrix_csv(text: str, origin: str) -> list[list[float]]:
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        cells = line.split(",")
        try:
            rows.append([float(cell) for cell in cells])
        except ValueError as exc:
            raise ValidationError(f"{origin}:{lineno}: non-numeric cell") from exc
    if not rows or any(len(row) != len(rows) for row in rows):
        raise ValidationError(f"{origin}: expected a square numeric matrix")
    return rows


@dataclass(frozen=True)
class ScenarioMetrics:
    """Summary numbers for one finished run (one-based day convention)."""

    policy: str
    deaths_total: float
    deaths_since_vax: float
    cumulative_incidence: float
    eradication_day: int | None
    vaccines_used: float

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "deaths_total": self.deaths_total,
            "deaths_since_vax": self.deaths_since_vax,
            "cumulative_incidence": self.cumulative_incidence,
            "eradication_day": self.eradication_day,
            "vaccines_used": self.vaccines_used,
        }


def compute_metrics(run: ScenarioResult, cfg=None) -> ScenarioMetrics:
    """Summary metrics at the end of the strategy horizon.

    Deaths are read off day ``N_v`` (the horizon's last decision day);
    cumulative incidence counts every new infection over the run plus the
    initial seeding; eradication day is the first vaccination-era day with
    every group's infected count strictly below the threshold.
    """
    traj = run.trajectory
    params = run.params
    n_days = traj.n_steps
    start_day = run.vaccination_start_day
    i_e = run.eradication_threshold
    deaths_total = float(traj.d[n_days - 1].sum())
    start_idx = min(max(start_day - 1, 0), n_days)
    deaths_at_start = float(traj.d[start_idx].sum())
    new_inf = (params.lam * traj.s[:n_days]) * (traj.i[:n_days] @ params.contact.T)
    cumulative = float(new_inf.sum()) + float(traj.i[0].sum())
    eradication_day = None
    for day in range(start_day, n_days + 1):
        if bool(np.all(traj.i[day - 1] < i_e)):
            eradication_day = day
            break
    return ScenarioMetrics(
        policy=run.policy,
        deaths_total=deaths_total,
        deaths_since_vax=deaths_total - deaths_at_start,
        cumulative_incidence=cumulative,
        eradication_day=eradication_day,
        vaccines_used=float(traj.applied_u.sum()),
    )


_COMPARE_FIELDS = (
    "deaths_since_vax",
    "cumulative_incidence",
    "eradication_day",
    "vaccines_used",
)


@dataclass(frozen=True)
class ComparisonReport:
    """Side-by-side metrics with improvements relative to the first run.

    Improvements are (baseline - other) / baseline per metric; eradication
    is measured in days since the vaccination start so percentages match the
    days-to-eradicate reading.
    """

    start_day: int
    metrics: list[ScenarioMetrics]
    improvements: list[dict]

    def to_dict(self) -> dict:
        return {
            "start_day": self.start_day,
            "runs": [m.to_dict() for m in self.metrics],
            "improvements": self.improvements,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_text(self) -> str:
        headers = ["policy"] + list(_COMPARE_FIELDS)
        rows = []
        for m in self.metrics:
            d = m.to_dict()
            rows.append(
                [m.policy]
                + [_fmt_metric(d[f], f, self.start_day) for f in _COMPARE_FIELDS]
            )
        for imp in self.improvements:
            rows.append(
                [f"improvement vs {imp['baseline']}"]
                + [_fmt_pct(imp[f]) for f in _COMPARE_FIELDS]
            )
        widths = [
            max(len(str(r[c])) for r in [headers] + rows)
            for c in range(len(headers))
        ]
        lines = [
            "  ".join(str(cell).rjust(w) for cell, w in zip(row, widths))
            for row in [headers] + rows
        ]
        return "\n".join(lines)


def _fmt_metric(value, fld: str, start_day: int) -> str:
    if value is None:
        return "n/a"
    if fld == "eradication_day":
        return f"{value} (+{value - start_day}d)"
    return f"{value:.4f}"


def _fmt_pct(value) -> str:
    return "n/a" if value is None else f"{100.0 * value:.1f}%"


def _improvement(base, other):
    if base is None or other is None:
        return None
    if base == 0:
        return 0.0 if other == 0 else None
    return (base - other) / base


def compare(
    runs: list[ScenarioResult], fingerprints: list[str] | None = None
) -> ComparisonReport:
    """Build a comparison of runs that share model, start state and budget."""
    if not runs:
        raise ContractViolation("compare needs at least one run")
    first = runs[0]
    for other in runs[1:]:
        same = (
            np.array_equal(first.params.population, other.params.population)
            and np.array_equal(first.params.lam, other.params.lam)
            and np.array_equal(first.params.gamma_r, other.params.gamma_r)
            and np.array_equal(first.params.gamma_d, other.params.gamma_d)
            and np.array_equal(first.params.contact, other.params.contact)
            and np.array_equal(first.trajectory.s[0], other.trajectory.s[0])
            and np.array_equal(first.trajectory.i[0], other.trajectory.i[0])
            and first.vaccination_start_day == other.vaccination_start_day
        )
        if not same:
            raise ContractViolation("runs to compare use different scenario inputs")
    if fingerprints and len(set(fingerprints)) > 1:
        raise ContractViolation("runs to compare carry different fingerprints")
    metrics = [compute_metrics(run) for run in runs]
    start_day = first.vaccination_start_day
    return _report_from_metrics(metrics, start_day)


def _report_from_metrics(
    metrics: list[ScenarioMetrics], start_day: int
) -> ComparisonReport:
    baseline = metrics[0]
    improvements = []
    for other in metrics[1:]:
        entry = {"baseline": baseline.policy, "policy": other.policy}
        for fld in _COMPARE_FIELDS:
            base_v = getattr(baseline, fld)
            other_v = getattr(other, fld)
            if fld == "eradication_day":
                base_v = None if base_v is None else base_v - start_day
                other_v = None if other_v is None else other_v - start_day
            entry[fld] = _improvement(base_v, other_v)
        improvements.append(entry)
    return ComparisonReport(
        start_day=start_day, metrics=metrics, improvements=improvements
    )


def run_scenario(config: ScenarioConfig, policy: str | None = None) -> ScenarioResult:
    """Build the model from a config and simulate its policy's closed loop."""
    params = config.build_params()
    state0 = config.build_initial_state(params)
    return mpc_mod.run_policy_loop(
        state0, config.mpc, params, policy=policy or config.policy
    )


def _fmt_float(x: float) -> str:
    return repr(float(x))


def write_run(
    run: ScenarioResult,
    out_dir: str | Path,
    fingerprint: str | None = None,
) -> ScenarioMetrics:
    """Write trajectory.csv, metrics.json and (for MPC) diagnostics.jsonl."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traj = run.trajectory
    n_days = traj.n_steps
    lines = ["day,group,S,I,R,D,applied_u"]
    for t in range(n_days + 1):
        day = traj.start_time_step + t + 1
        for g in range(run.params.n_a):
            applied = _fmt_float(traj.applied_u[t][g]) if t < n_days else ""
            lines.append(
                f"{day},{g},{_fmt_float(traj.s[t][g])},{_fmt_float(traj.i[t][g])},"
                f"{_fmt_float(traj.r[t][g])},{_fmt_float(traj.d[t][g])},{applied}"
            )
    (out / "trajectory.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    metrics = compute_metrics(run)
    payload = {
        "policy": run.policy,
        "metrics": metrics.to_dict(),
        "vaccination_start_day": run.vaccination_start_day,
        "strategy_horizon": n_days,
        "latch_day": run.latch_day,
    }
    if fingerprint is not None:
        payload["fingerprint"] = fingerprint
    (out / "metrics.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )

    if any(rec.v_n0 is not None for rec in run.day_records):
        records = []
        for t, rec in enumerate(run.day_records):
            records.append(json.dumps(rec.to_dict(traj.applied_u[t]), sort_keys=True))
        (out / "diagnostics.jsonl").write_text(
            "\n".join(records) + "\n", encoding="utf-8"
        )
    return metrics


def load_metrics(run_dir: str | Path) -> dict:
    """Read back a run directory's metrics payload."""
    path = Path(run_dir) / "metrics.json"
    if not path.exists():
        raise FileNotFoundError(f"no metrics.json under {run_dir}")
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


def compare_run_dirs(run_dirs: list[str | Path]) -> ComparisonReport:
    """Comparison report from saved run directories (fingerprints must match)."""
    payloads = [load_metrics(d) for d in run_dirs]
    prints = {p.get("fingerprint") for p in payloads}
    if len(prints) > 1:
        raise ContractViolation(
            "run directories come from different scenario inputs"
        )
    start_days = {p["vaccination_start_day"] for p in payloads}
    if len(start_days) != 1:
        raise ContractViolation("runs disagree on the vaccination start day")
    metrics = [
        ScenarioMetrics(
            policy=p["metrics"]["policy"],
            deaths_total=p["metrics"]["deaths_total"],
            deaths_since_vax=p["metrics"]["deaths_since_vax"],
            cumulative_incidence=p["metrics"]["cumulative_incidence"],
            eradication_day=p["metrics"]["eradication_day"],
            vaccines_used=p["metrics"]["vaccines_used"],
        )
        for p in payloads
    ]
    return _report_from_metrics(metrics, start_days.pop())
