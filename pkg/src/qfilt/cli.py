"""Batch experiment runner: every chapter-level simulation as a reproducible,
config-driven command emitting CSV plus a JSON manifest.

Usage:
    qfilt run <experiment> [--config FILE] [--seed S] [--workers W] [--out DIR]
    qfilt list
    qfilt rate [--alpha A] CSV [CSV ...]

Config files are line-oriented ``key = value`` text; ``[section]`` headers
group keys and are flattened.  ``#`` starts a comment.  Command-line
``--set key=value`` flags override file values.  Unknown keys are rejected.
Outputs are byte-identical for identical (config, seed, version): every CSV
carries a header row and a trailing manifest reference, and the manifest
records the resolved config, its hash, the seed and package versions.

Exit codes: 0 ok, 1 config error, 2 numeric failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from . import collective as col
from . import estimation as est
from . import kalman
from . import magnetometry as mag
from . import qec
from . import trajectory as traj
from .operators import SIGMA_X, SIGMA_Z, pure_to_density, spin_coherent


class ConfigError(Exception):
    pass


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_csv(path: str, header: list, columns: list, manifest_name: str) -> None:
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in zip(*columns):
            f.write(",".join(_fmt(v) for v in row) + "\n")
        f.write(f"# manifest: {manifest_name}\n")


# ---------------------------------------------------------------------------
# experiment runners; each returns {"files": {name: (header, columns)},
# "summary": {...}} and is deterministic given (params, seed)


def _run_kalman_demo(p, seed, workers):
    rec = kalman.brownian_parameter_demo(p["xi_true"], p["T"], p["dt"], seed,
                                         prior_var=p["prior_var"])
    cols = [rec["t"], np.concatenate([[0.0], rec["dY"][1:]]), rec["x_true"],
            rec["x_est"], rec["xi_est"],
            rec["P"][:, 0, 0], rec["P"][:, 0, 1], rec["P"][:, 1, 1]]
    return {
        "files": {"kalman_demo.csv":
                  (["time", "dY", "x_true", "x_est", "xi_est", "P00", "P01", "P11"], cols)},
        "summary": {"final_xi_est": rec["xi_est"][-1],
                    "final_xi_sd": float(np.sqrt(rec["P"][-1, 1, 1]))},
    }


def _run_qubit_filter(p, seed, workers):
    model = traj.qubit_model(p["kappa"], p["B"])
    rho0 = pure_to_density(spin_coherent(0.5, np.pi / 2, 0.0))
    every = max(1, int(round(p["store_every"])))
    rec = traj.simulate_truth(model, rho0, p["T"], p["dt"], seed,
                              observables={"sx": SIGMA_X, "sz": SIGMA_Z})
    n = len(rec.dY)
    idx = np.arange(0, n, every)
    cols = [rec.times[idx], rec.dY[idx], rec.dW[idx],
            rec.expectations["sx"][idx], rec.expectations["sz"][idx]]
    return {
        "files": {"qubit_filter.csv": (["time", "dY", "dW", "sx", "sz"], cols)},
        "summary": {"final_sz": rec.expectations["sz"][-1]},
    }


def _run_param_ensemble(p, seed, workers):
    values = p["B_values"]
    every = max(1, int(round(p["store_every"])))
    out = est.qubit_finite_set_batch(p["kappa"], values, p["B_true"], p["T"], p["dt"],
                                     seed, n_seeds=1, store_every=every)
    w = out["weights"][:, 0, :]
    header = ["time"] + [f"w_B={_fmt(v)}" for v in values]
    cols = [out["times"]] + [w[:, i] for i in range(len(values))]
    return {
        "files": {"param_ensemble.csv": (header, cols)},
        "summary": {"final_weights": {str(v): float(x)
                                      for v, x in zip(values, out["final_weights"][0])}},
    }


def _run_particle_filter(p, seed, workers):
    record = est.simulate_qubit_record(p["kappa"], p["B_true"], p["T"], p["dt"], (seed, "truth"))
    model = est.QubitMagnetometerModel(
        kappa=p["kappa"], prior=("gaussian", p["prior_mean"], p["prior_var"]))
    res = est.particle_filter_run(model, record, int(p["N"]), p["a"], p["h"],
                                  p["threshold"], seed)
    every = max(1, int(round(p["store_every"])))
    idx = np.arange(0, len(res["mean_trace"]), every)
    cols = [record.times[idx], res["mean_trace"][idx], res["sd_trace"][idx]]
    return {
        "files": {"particle_filter.csv": (["time", "B_mean", "B_sd"], cols)},
        "summary": {"estimate": res["estimate"], "uncertainty": res["uncertainty"],
                    "n_resamples": res["n_resamples"]},
    }


def _fisher_task(args):
    F, K, M, B, deltaB, T, dt, seed, k = args
    params = mag.DoublePassParams(F=F, M=M, K=K, B=B)
    return mag.fisher_information_fd(params, deltaB, T, dt, (seed, k))


def _run_magnetometer_fisher(p, seed, workers):
    rows = []
    tasks = []
    for F in p["F_values"]:
        for K in p["K_values"]:
            for k in range(int(p["n_seeds"])):
                tasks.append((F, K, p["M"], p["B"], p["deltaB"], p["T"], p["dt"], seed, k))
    results = _parallel_map(_fisher_task, tasks, workers)
    i = 0
    for F in p["F_values"]:
        for K in p["K_values"]:
            infos = np.array(results[i:i + int(p["n_seeds"])])
            i += int(p["n_seeds"])
            mean, std = infos.mean(), (infos.std(ddof=1) if len(infos) > 1 else 0.0)
            rows.append((F, K, mean, std, mag.cramer_rao_bound(mean),
                         mean ** -1.5 * std / 2.0))
    cols = list(map(np.array, zip(*rows)))
    return {
        "files": {"fisher_sweep.csv":
                  (["F", "K", "info_mean", "info_std", "bound", "bound_sigma"], cols)},
        "summary": {"rows": len(rows)},
    }


def _run_magnetometer_kalman(p, seed, workers):
    params = mag.DoublePassParams(F=p["F"], M=p["M"], K=p["K"], B=p["B_true"])
    record = mag.simulate_double_pass_truth(params, p["T"], p["dt"], seed)
    model = mag.smallangle_kalman_model(params)
    state = kalman.KalmanState(estimate=np.zeros(2),
                               covariance=np.diag([0.0, p["prior_var"]]))
    every = max(1, int(round(p["store_every"])))
    steps = len(record.dY)
    out_t, out_th, out_B, out_v = [], [], [], []
    for i in range(steps):
        state = kalman.kalman_correlated_step(model, state, record.dY[i], i * p["dt"], p["dt"])
        if (i + 1) % every == 0:
            out_t.append((i + 1) * p["dt"])
            out_th.append(state.estimate[0])
            out_B.append(state.estimate[1])
            out_v.append(state.covariance[1, 1])
    cols = [np.array(out_t), np.array(out_th), np.array(out_B), np.array(out_v)]
    return {
        "files": {"magnetometer_kalman.csv":
                  (["time", "theta_est", "B_est", "B_var"], cols)},
        "summary": {"final_B_est": cols[2][-1], "final_B_sd": float(np.sqrt(cols[3][-1]))},
    }


def _qec_traj_task(args):
    (name, gamma, kappa, lmax, T, dt, seed, k, controller) = args
    code = qec.build_code(name)
    basis = qec.build_truncated_basis(code) if controller == "truncated" else None
    out = qec.run_feedback_batch(code, gamma, kappa, lmax, T, dt, (seed, "qec", k), 1,
                                 controller=controller, basis=basis, record_every=10)
    res = {"times": out["times"], "codespace": out["codespace"][0],
           "codeword": out["codeword"][0]}
    if "policy_agreement" in out:
        res["agreement"] = float(out["policy_agreement"][0])
    return res


def _run_qec(p, seed, workers):
    n_traj = int(p["n_traj"])
    tasks = [(p["code"], p["gamma"], p["kappa"], p["lambda_max"], p["T"], p["dt"],
              seed, k, p["controller"]) for k in range(n_traj)]
    results = _parallel_map(_qec_traj_task, tasks, workers)
    times = results[0]["times"]
    cs = np.stack([r["codespace"] for r in results])
    cw = np.stack([r["codeword"] for r in results])
    header = ["time", "codespace_mean", "codeword_mean"] \
        + [f"codespace_{k}" for k in range(n_traj)]
    cols = [times, cs.mean(axis=0), cw.mean(axis=0)] + [cs[k] for k in range(n_traj)]
    summary = {"mean_final_codespace": float(cs[:, -1].mean()),
               "mean_final_codeword": float(cw[:, -1].mean())}
    if "agreement" in results[0]:
        summary["mean_policy_agreement"] = float(np.mean([r["agreement"] for r in results]))
    return {"files": {"qec_run.csv": (header, cols)}, "summary": summary}


def _run_qec_benchmark(p, seed, workers):
    n_traj = int(p["n_traj"])
    tasks = [(p["code"], p["gamma"], p["kappa"], p["lambda_max"], p["T"], p["dt"],
              seed, k, "truncated") for k in range(n_traj)]
    results = _parallel_map(_qec_traj_task, tasks, workers)
    times = results[0]["times"]
    cw = np.stack([r["codeword"] for r in results]).mean(axis=0)
    cs = np.stack([r["codespace"] for r in results]).mean(axis=0)
    discrete = qec.codeword_fidelity_discrete(times, p["gamma"])
    cols = [times, cs, cw, discrete]
    return {
        "files": {"qec_benchmark.csv":
                  (["time", "codespace_feedback", "codeword_feedback", "codeword_discrete"], cols)},
        "summary": {"final_codeword_feedback": float(cw[-1]),
                    "final_codeword_discrete": float(discrete[-1]),
                    "mean_policy_agreement": float(np.mean([r["agreement"] for r in results]))},
    }


def _run_collective_cat(p, seed, workers):
    N = int(p["N"])
    label = p["channel"]
    if label == "sigma_z":
        sym = col.SpinChannel(s_z=1.0, rate=p["Gamma"])
        coll = col.CollectiveChannel(word_coeffs=((2.0, "z"),), rate=p["Gamma"])
    elif label == "sigma_minus":
        sym = col.SpinChannel(s_minus=1.0, rate=p["Gamma"])
        coll = col.CollectiveChannel(word_coeffs=((1.0, "-"),), rate=p["Gamma"])
    else:
        raise ConfigError("channel must be sigma_z or sigma_minus")
    steps = int(round(p["T"] / p["dt"]))
    every = max(1, int(round(p["store_every"])))
    ref = col.cat_state(N)
    states = {"sym": col.cat_state(N), "coll": col.cat_state(N)}
    rows = {"t": [], "sym": [], "coll": [], "topJ": []}
    for i in range(steps):
        states["sym"] = col.collective_master_step(None, [sym], states["sym"], p["dt"])
        states["coll"] = col.collective_master_step(None, [coll], states["coll"], p["dt"])
        if (i + 1) % every == 0:
            rows["t"].append((i + 1) * p["dt"])
            rows["sym"].append(col.fidelity_with(states["sym"], ref))
            rows["coll"].append(col.fidelity_with(states["coll"], ref))
            rows["topJ"].append(col.irrep_population(states["sym"], N / 2.0))
    cols = [np.array(rows["t"]), np.array(rows["sym"]), np.array(rows["coll"]),
            np.array(rows["topJ"])]
    return {
        "files": {"collective_cat.csv":
                  (["time", "fidelity_symmetric", "fidelity_collective", "topJ_population_symmetric"], cols)},
        "summary": {"final_fidelity_symmetric": float(cols[1][-1]),
                    "final_fidelity_collective": float(cols[2][-1])},
    }


def _run_collective_squeeze(p, seed, workers):
    N = int(p["N"])
    lam = p["Lambda"]
    H = ((-1j * lam, "++"), (1j * lam, "--"))
    channels = {
        "free": [],
        "sym": [col.SpinChannel(s_minus=1.0, rate=p["Gamma"])],
        "coll": [col.CollectiveChannel(word_coeffs=((1.0, "-"),), rate=p["Gamma"])],
    }
    states = {k: col.coherent_top(N) for k in channels}
    steps = int(round(p["T"] / p["dt"]))
    every = max(1, int(round(p["store_every"])))
    rows = {"t": [], "free": [], "sym": [], "coll": []}
    for i in range(steps):
        for k, ch in channels.items():
            states[k] = col.collective_master_step(H, ch, states[k], p["dt"])
        if (i + 1) % every == 0:
            rows["t"].append((i + 1) * p["dt"])
            for k in channels:
                rows[k].append(col.squeezing_xi2(states[k]))
    cols = [np.array(rows["t"]), np.array(rows["free"]), np.array(rows["sym"]),
            np.array(rows["coll"])]
    return {
        "files": {"collective_squeeze.csv":
                  (["time", "xi2_free", "xi2_symmetric", "xi2_collective"], cols)},
        "summary": {"min_xi2_free": float(np.min(cols[1])),
                    "min_xi2_symmetric": float(np.min(cols[2]))},
    }


def _floats(text):
    return [float(x) for x in str(text).split(",") if x.strip() != ""]


EXPERIMENTS = {
    "kalman-demo": {
        "doc": "Brownian-forcing parameter estimation with the Kalman-Bucy filter",
        "runner": _run_kalman_demo,
        "schema": {
            "xi_true": (float, 1.0, "true forcing parameter"),
            "T": (float, 10.0, "integration horizon"),
            "dt": (float, 1e-3, "time step"),
            "prior_var": (float, 1e5, "initial parameter variance"),
        },
    },
    "qubit-filter": {
        "doc": "continuously monitored qubit trajectory (collapse from +x)",
        "runner": _run_qubit_filter,
        "schema": {
            "kappa": (float, 1.0, "measurement strength"),
            "B": (float, 0.0, "magnetic field"),
            "T": (float, 10.0, "integration horizon (units 1/kappa)"),
            "dt": (float, 1e-5, "time step"),
            "store_every": (float, 100, "record every k-th step"),
        },
    },
    "param-ensemble": {
        "doc": "finite-set magnetic field estimation on a monitored qubit",
        "runner": _run_param_ensemble,
        "schema": {
            "kappa": (float, 1.0, "measurement strength"),
            "B_values": (_floats, "2,5,8,12", "candidate field values (units kappa)"),
            "B_true": (float, 2.0, "true field value"),
            "T": (float, 10.0, "integration horizon"),
            "dt": (float, 1e-5, "time step"),
            "store_every": (float, 1000, "record every k-th step"),
        },
    },
    "particle-filter": {
        "doc": "resampling quantum particle filter for the qubit magnetometer",
        "runner": _run_particle_filter,
        "schema": {
            "kappa": (float, 1.0, "measurement strength"),
            "B_true": (float, 5.0, "true field value"),
            "N": (float, 200, "particle count"),
            "T": (float, 2.0, "integration horizon"),
            "dt": (float, 1e-4, "time step"),
            "a": (float, 0.98, "kernel mean-reversion factor"),
            "h": (float, 1e-3, "kernel bandwidth factor"),
            "threshold": (float, 2.0 / 3.0, "resample when N_eff/N drops below"),
            "prior_mean": (float, 0.0, "Gaussian prior mean"),
            "prior_var": (float, 10.0, "Gaussian prior variance"),
            "store_every": (float, 100, "record every k-th step"),
        },
    },
    "magnetometer-fisher": {
        "doc": "finite-difference Fisher information of the double-pass magnetometer",
        "runner": _run_magnetometer_fisher,
        "schema": {
            "F_values": (_floats, "10,20", "collective spin sizes"),
            "K_values": (_floats, "0,0.0001", "second-pass strengths"),
            "M": (float, 1.0, "first-pass strength"),
            "B": (float, 0.0, "operating field"),
            "deltaB": (float, 1e-3, "finite-difference offset"),
            "T": (float, 1.0, "integration horizon"),
            "dt": (float, 1e-4, "time step"),
            "n_seeds": (float, 4, "noise realizations per point"),
        },
    },
    "magnetometer-kalman": {
        "doc": "small-angle Kalman field estimate on a double-pass record",
        "runner": _run_magnetometer_kalman,
        "schema": {
            "F": (float, 10.0, "collective spin size"),
            "M": (float, 1.0, "first-pass strength"),
            "K": (float, 0.0, "second-pass strength"),
            "B_true": (float, 0.0, "true field value"),
            "prior_var": (float, 10.0, "initial field variance"),
            "T": (float, 1.0, "integration horizon"),
            "dt": (float, 1e-4, "time step"),
            "store_every": (float, 10, "record every k-th step"),
        },
    },
    "qec-run": {
        "doc": "continuous error correction trajectories with feedback",
        "runner": _run_qec,
        "schema": {
            "code": (str, "fivequbit", "code name (fivequbit or bitflip3)"),
            "controller": (str, "truncated", "feedback controller: truncated/full/none"),
            "gamma": (float, 1.0, "depolarizing rate"),
            "kappa": (float, 100.0, "measurement strength"),
            "lambda_max": (float, 200.0, "maximum feedback strength"),
            "T": (float, 0.05, "integration horizon (units 1/gamma)"),
            "dt": (float, 1e-5, "time step"),
            "n_traj": (float, 2, "trajectory count"),
        },
    },
    "qec-benchmark": {
        "doc": "feedback vs discrete-time codeword fidelity for the five-qubit code",
        "runner": _run_qec_benchmark,
        "schema": {
            "code": (str, "fivequbit", "code name"),
            "gamma": (float, 1.0, "depolarizing rate"),
            "kappa": (float, 100.0, "measurement strength"),
            "lambda_max": (float, 200.0, "maximum feedback strength"),
            "T": (float, 0.1, "integration horizon (units 1/gamma)"),
            "dt": (float, 1e-5, "time step"),
            "n_traj": (float, 4, "trajectory count"),
        },
    },
    "collective-cat": {
        "doc": "cat-state fidelity decay: symmetric-local vs collective channel",
        "runner": _run_collective_cat,
        "schema": {
            "N": (float, 10, "qubit count"),
            "channel": (str, "sigma_z", "sigma_z or sigma_minus"),
            "Gamma": (float, 1.0, "decoherence rate"),
            "T": (float, 0.2, "integration horizon (units 1/Gamma)"),
            "dt": (float, 1e-3, "time step"),
            "store_every": (float, 10, "record every k-th step"),
        },
    },
    "collective-squeeze": {
        "doc": "counter-twisting squeezing under symmetric vs collective decay",
        "runner": _run_collective_squeeze,
        "schema": {
            "N": (float, 100, "qubit count"),
            "Lambda": (float, 1.0, "twisting strength"),
            "Gamma": (float, 0.2, "decoherence rate"),
            "T": (float, 0.03, "integration horizon"),
            "dt": (float, 1e-4, "time step"),
            "store_every": (float, 10, "record every k-th step"),
        },
    },
}


def _parallel_map(fn, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks))


def parse_config_text(text: str) -> dict:
    """Line-oriented key = value parser; [section] headers are flattened."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def resolve_params(experiment: str, raw: dict) -> dict:
    try:
        schema = EXPERIMENTS[experiment]["schema"]
    except KeyError:
        raise ConfigError(f"unknown experiment {experiment!r}") from None
    unknown = set(raw) - set(schema)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    params = {}
    for key, (conv, default, _doc) in schema.items():
        if key in raw:
            try:
                params[key] = conv(raw[key])
            except (TypeError, ValueError):
                raise ConfigError(f"bad value for key {key!r}: {raw[key]!r}") from None
        else:
            params[key] = conv(default) if not isinstance(default, str) or conv is not str \
                else default
    return params


def _canonical(params: dict) -> str:
    return json.dumps(params, sort_keys=True, default=str)


def run_experiment(experiment: str, params: dict, seed: int, workers: int,
                   outdir: str) -> dict:
    os.makedirs(outdir, exist_ok=True)
    result = EXPERIMENTS[experiment]["runner"](params, seed, workers)
    manifest_name = f"{experiment}.manifest.json"
    written = []
    for fname, (header, columns) in result["files"].items():
        write_csv(os.path.join(outdir, fname), header, columns, manifest_name)
        written.append(fname)
    manifest = {
        "experiment": experiment,
        "config": {k: _fmt(v) if isinstance(v, float) else v for k, v in params.items()},
        "config_hash": hashlib.sha256(_canonical(params).encode()).hexdigest(),
        "seed": seed,
        "versions": {"qfilt": __version__, "numpy": np.__version__},
        "outputs": written,
        "summary": result.get("summary", {}),
    }
    with open(os.path.join(outdir, manifest_name), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


def list_experiments(stream=None) -> None:
    """Print every experiment with its keys, defaults and descriptions; each
    block doubles as a config template."""
    stream = stream or sys.stdout
    for name, info in EXPERIMENTS.items():
        stream.write(f"## experiment: {name}\n")
        stream.write(f"# {info['doc']}\n")
        for key, (_conv, default, doc) in info["schema"].items():
            stream.write(f"{key} = {default}  # {doc}\n")
        stream.write("\n")


def convergence_rate(csv_paths: list, alpha: float = 0.95):
    """Post-processing: fraction of runs in which some weight column exceeds
    alpha, per time row, averaged over the given ensemble CSVs."""
    traces = []
    times = None
    for path in csv_paths:
        rows = []
        with open(path) as f:
            header = f.readline().strip().split(",")
            wcols = [i for i, h in enumerate(header) if h.startswith("w_")]
            if not wcols:
                raise ConfigError(f"{path}: no weight columns (w_*) found")
            for line in f:
                if line.startswith("#"):
                    continue
                vals = [float(x) for x in line.strip().split(",")]
                rows.append((vals[0], max(vals[i] for i in wcols)))
        t = np.array([r[0] for r in rows])
        if times is None:
            times = t
        traces.append(np.array([1.0 if r[1] > alpha else 0.0 for r in rows]))
    return times, np.mean(traces, axis=0)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="qfilt",
                                     description="continuous-time filtering experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment")
    p_run.add_argument("experiment", choices=sorted(EXPERIMENTS))
    p_run.add_argument("--config", help="key = value config file")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--workers", type=int, default=1)
    p_run.add_argument("--out", default=".")
    p_run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value (repeatable)")
    sub.add_parser("list", help="list experiments and their config schemas")
    p_rate = sub.add_parser("rate", help="convergence-rate metric over ensemble CSVs")
    p_rate.add_argument("csv", nargs="+")
    p_rate.add_argument("--alpha", type=float, default=0.95)
    args = parser.parse_args(argv)

    if args.command == "list":
        list_experiments()
        return 0
    try:
        if args.command == "rate":
            times, rate = convergence_rate(args.csv, args.alpha)
            sys.stdout.write("time,rate\n")
            for t, r in zip(times, rate):
                sys.stdout.write(f"{_fmt(t)},{_fmt(r)}\n")
            return 0
        raw = {}
        if args.config:
            with open(args.config) as f:
                raw.update(parse_config_text(f.read()))
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            key, _, value = item.partition("=")
            raw[key.strip()] = value.strip()
        params = resolve_params(args.experiment, raw)
    except (ConfigError, FileNotFoundError) as e:
        sys.stderr.write(f"config error: {e}\n")
        return 1
    try:
        manifest = run_experiment(args.experiment, params, args.seed, args.workers, args.out)
    except FloatingPointError as e:
        sys.stderr.write(f"numeric failure: {e}\n")
        return 2
    sys.stdout.write(json.dumps(manifest["summary"], sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
