"""Command-line entry point: config parsing and experiment orchestration.

Subcommands: generate-topology, train, simulate, baseline, verify. Config
files are flat "key = value" text with dotted section prefixes; all
randomness flows from the single config seed through named sub-streams so
one seed reproduces an entire experiment. Exit codes: 0 success, 1 config
error, 2 numeric/divergence error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import topology as topo
from . import verify as verification
from .controller import checkpoint_to_json, controller_from_checkpoint
from .errors import (
    CertificateError,
    ConfigError,
    ConvergenceError,
    DimensionError,
    DivergenceError,
    NumericError,
    ParametrizationError,
    PhsyncError,
    StructureError,
)
from .numerics import SeededRng
from .plant import KuramotoParams
from .simulate import (
    RolloutConfig,
    baseline_rollout,
    rollout,
    sample_initial,
    trajectory_to_csv,
)
from .train import (
    STREAM_BASELINE,
    STREAM_HELDOUT,
    STREAM_INITS,
    STREAM_OMEGA,
    STREAM_PROBES,
    STREAM_SIM_INITS,
    STREAM_TOPOLOGY,
    ControllerArch,
    TrainConfig,
    train,
    training_log_csv,
)

__all__ = ["RunConfig", "load_config", "main", "main_entry"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2
EXIT_VERIFY = 3

_DEFAULTS = {
    "topology.kind": "complete",
    "topology.n": "64",
    "topology.p": "0.3",
    "topology.rows": "8",
    "topology.cols": "8",
    "topology.k": "5",
    "topology.p_rewire": "0.3",
    "plant.coupling": "1.0",
    "plant.omega": "auto",
    "controller.epsilon": "0.85",
    "controller.q": "4",
    "controller.h": "8",
    "controller.hamiltonian": "logcosh",
    "rollout.dt": "0.01",
    "rollout.horizon": "3.0",
    "rollout.beta": "0.01",
    "rollout.normalize_cost": "false",
    "train.epochs": "500",
    "train.inits": "4",
    "train.lr": "5e-3",
    "train.seed": "1",
    "train.alpha_grad": "exact",
    "output_dir": "out",
}


@dataclass(frozen=True)
class RunConfig:
    """Typed view of a config file plus the hash of its raw bytes."""

    topology_kind: str
    n: int
    er_p: float
    lattice_rows: int
    lattice_cols: int
    ws_k: int
    ws_p_rewire: float
    coupling: float
    omega: object  # "auto" or tuple of floats
    epsilon: float
    q: int
    h: int
    hamiltonian: str
    dt: float
    horizon: float
    beta: float
    normalize_cost: bool
    epochs: int
    inits: int
    lr: float
    seed: int
    alpha_grad: str
    output_dir: str
    config_hash: str


def _parse_kv_text(text: str) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"duplicate config key {key!r}")
        values[key] = value
    return values


def _as_bool(key: str, value: str) -> bool:
    if value == "true":
        return True
    if value == "false":
        return False
    raise ConfigError(f"{key} must be 'true' or 'false', got {value!r}")


def load_config(path, seed_override=None, out_override=None) -> RunConfig:
    """Read and validate a config file; unknown keys are rejected."""
    data = Path(path).read_bytes()
    values = dict(_DEFAULTS)
    values.update(_parse_kv_text(data.decode("utf-8")))
    config_hash = hashlib.sha256(data).hexdigest()

    try:
        kind = values["topology.kind"]
        if kind not in ("complete", "erdos-renyi", "square-lattice", "watts-strogatz"):
            raise ConfigError(f"unknown topology.kind {kind!r}")
        omega_raw = values["plant.omega"]
        if omega_raw == "auto":
            omega = "auto"
        else:
            omega = tuple(float(v) for v in omega_raw.split(","))
        ham = values["controller.hamiltonian"]
        if ham not in ("logcosh", "quadratic"):
            raise ConfigError(f"controller.hamiltonian must be logcosh or quadratic, got {ham!r}")
        alpha_grad = values["train.alpha_grad"]
        if alpha_grad not in ("exact", "frozen"):
            raise ConfigError(f"train.alpha_grad must be exact or frozen, got {alpha_grad!r}")
        cfg = RunConfig(
            topology_kind=kind,
            n=int(values["topology.n"]),
            er_p=float(values["topology.p"]),
            lattice_rows=int(values["topology.rows"]),
            lattice_cols=int(values["topology.cols"]),
            ws_k=int(values["topology.k"]),
            ws_p_rewire=float(values["topology.p_rewire"]),
            coupling=float(values["plant.coupling"]),
            omega=omega,
            epsilon=float(values["controller.epsilon"]),
            q=int(values["controller.q"]),
            h=int(values["controller.h"]),
            hamiltonian=ham,
            dt=float(values["rollout.dt"]),
            horizon=float(values["rollout.horizon"]),
            beta=float(values["rollout.beta"]),
            normalize_cost=_as_bool("rollout.normalize_cost", values["rollout.normalize_cost"]),
            epochs=int(values["train.epochs"]),
            inits=int(values["train.inits"]),
            lr=float(values["train.lr"]),
            seed=int(seed_override) if seed_override is not None else int(values["train.seed"]),
            alpha_grad=alpha_grad,
            output_dir=out_override or values["output_dir"],
            config_hash=config_hash,
        )
    except ValueError as exc:  # int()/float() failures
        raise ConfigError(str(exc)) from exc
    if cfg.omega != "auto" and len(cfg.omega) != cfg.n:
        raise ConfigError(f"plant.omega lists {len(cfg.omega)} values for {cfg.n} nodes")
    return cfg


def _topology_kind(cfg: RunConfig):
    if cfg.topology_kind == "complete":
        return topo.Complete()
    if cfg.topology_kind == "erdos-renyi":
        return topo.ErdosRenyi(cfg.er_p)
    if cfg.topology_kind == "square-lattice":
        return topo.SquareLattice(cfg.lattice_rows, cfg.lattice_cols)
    return topo.WattsStrogatz(cfg.ws_k, cfg.ws_p_rewire)


def _build_world(cfg: RunConfig):
    """Graph, plant, and communication mask derived from the config seed."""
    rng_topo = SeededRng(cfg.seed, STREAM_TOPOLOGY)
    graph = topo.generate(_topology_kind(cfg), cfg.n, rng_topo)
    adjacency = topo.adjacency(graph)
    if cfg.omega == "auto":
        omega = SeededRng(cfg.seed, STREAM_OMEGA).uniform(0.0, 4.0, size=cfg.n)
    else:
        omega = np.asarray(cfg.omega, dtype=float)
    plant = KuramotoParams(cfg.n, cfg.coupling, omega, adjacency)
    mask = topo.comm_mask(graph)
    return graph, plant, mask


def _rollout_config(cfg: RunConfig) -> RolloutConfig:
    return RolloutConfig(cfg.dt, cfg.horizon, cfg.beta, cfg.normalize_cost)


def _write(path: Path, content: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(content)


def cmd_generate_topology(cfg: RunConfig, quiet: bool) -> int:
    graph, _, _ = _build_world(cfg)
    out = Path(cfg.output_dir) / "topology.txt"
    _write(out, topo.to_edge_list_text(graph))
    if not quiet:
        print(f"wrote {out} ({len(graph.edges)} edges on {graph.n} nodes)")
    return EXIT_OK


def cmd_train(cfg: RunConfig, quiet: bool) -> int:
    _, plant, mask = _build_world(cfg)
    rollout_cfg = _rollout_config(cfg)
    train_cfg = TrainConfig(
        epochs=cfg.epochs,
        n_inits=cfg.inits,
        rollout=rollout_cfg,
        seed=cfg.seed,
        lr=cfg.lr,
        alpha_grad=cfg.alpha_grad,
    )
    arch = ControllerArch(cfg.epsilon, cfg.q, cfg.h, cfg.hamiltonian)
    result = train(train_cfg, plant, mask, arch)
    if not quiet:
        for rec in result.log:
            print(
                f"epoch {rec.epoch:4d}  loss {rec.loss:.6f}  |grad| {rec.grad_norm:.4f}  "
                f"alpha {rec.alpha:.4f}  {'clip' if rec.clip_active else '    '}  {rec.wall_ms:.0f} ms"
            )

    out_dir = Path(cfg.output_dir)
    _write(
        out_dir / "checkpoint.json",
        checkpoint_to_json(result.params, mask, result.controller.alpha, cfg.seed, cfg.config_hash),
    )
    _write(out_dir / "training_log.csv", training_log_csv(result.log))

    heldout_rng = SeededRng(cfg.seed, STREAM_HELDOUT)
    q_total = result.controller.state_dim
    heldout = [sample_initial(plant.n, q_total, heldout_rng) for _ in range(4)]
    final_traj = rollout(plant, result.controller, heldout[0], rollout_cfg.extended(2.0))
    _write(out_dir / "trajectory.csv", trajectory_to_csv(final_traj, cfg.config_hash))

    report = verification.closed_loop_check(
        plant,
        result.controller,
        heldout,
        rollout_cfg,
        SeededRng(cfg.seed, STREAM_PROBES),
    )
    _write(out_dir / "report.json", verification.report_to_json(report, cfg.config_hash))

    final_loss = result.log[-1].loss if result.log else float("nan")
    horizon_idx = rollout_cfg.steps
    print(f"final_loss={final_loss!r} r_T={final_traj.r[horizon_idx]!r}")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, checkpoint_path, quiet: bool) -> int:
    _, plant, _ = _build_world(cfg)
    ctrl, _, _, _ = controller_from_checkpoint(Path(checkpoint_path).read_text())
    if ctrl.input_dim != plant.n:
        raise DimensionError(
            f"checkpoint drives {ctrl.input_dim} nodes but config has {plant.n}"
        )
    rollout_cfg = _rollout_config(cfg)
    rng = SeededRng(cfg.seed, STREAM_SIM_INITS)
    init = sample_initial(plant.n, ctrl.state_dim, rng)
    traj = rollout(plant, ctrl, init, rollout_cfg.extended(2.0))
    out = Path(cfg.output_dir) / "trajectory.csv"
    _write(out, trajectory_to_csv(traj, cfg.config_hash))
    if not quiet:
        print(f"wrote {out} (r at end of horizon: {traj.r[rollout_cfg.steps]:.4f})")
    return EXIT_OK


def cmd_baseline(cfg: RunConfig, quiet: bool) -> int:
    _, plant, _ = _build_world(cfg)
    rollout_cfg = _rollout_config(cfg)
    # Full-circle initial phases: the uncontrolled contrast starts from
    # generic incoherence rather than the controlled experiment's narrow set.
    rng = SeededRng(cfg.seed, STREAM_BASELINE)
    theta0 = rng.uniform(0.0, 2.0 * np.pi, size=plant.n)
    times, _, r = baseline_rollout(plant, theta0, rollout_cfg, u_value=1.0)
    lines = [f"# config_hash={cfg.config_hash}", "t,r"]
    lines.extend(f"{format(t, '.12g')},{format(v, '.12g')}" for t, v in zip(times, r))
    out = Path(cfg.output_dir) / "baseline.csv"
    _write(out, "\n".join(lines) + "\n")
    if not quiet:
        print(f"wrote {out} (max r over horizon: {np.max(r):.4f})")
    return EXIT_OK


def cmd_verify(cfg: RunConfig, checkpoint_path, quiet: bool) -> int:
    _, plant, _ = _build_world(cfg)
    ctrl, _, _, _ = controller_from_checkpoint(Path(checkpoint_path).read_text())
    if ctrl.input_dim != plant.n:
        raise DimensionError(
            f"checkpoint drives {ctrl.input_dim} nodes but config has {plant.n}"
        )
    rollout_cfg = _rollout_config(cfg)
    rng = SeededRng(cfg.seed, STREAM_HELDOUT)
    inits = [sample_initial(plant.n, ctrl.state_dim, rng) for _ in range(4)]
    report = verification.closed_loop_check(
        plant, ctrl, inits, rollout_cfg, SeededRng(cfg.seed, STREAM_PROBES)
    )
    out = Path(cfg.output_dir) / "report.json"
    _write(out, verification.report_to_json(report, cfg.config_hash))
    if not quiet:
        for name, ok in report.verdicts.items():
            print(f"{name}: {'pass' if ok else 'FAIL'}")
    if not report.certificates_pass:
        print("error: verification: certificate verdict failed", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phsync",
        description="Distributed port-Hamiltonian controller training and verification",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("generate-topology", "train", "simulate", "baseline", "verify"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to a key=value config file")
        p.add_argument("--checkpoint", help="path to a controller checkpoint JSON")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="seed override")
        p.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed_override=args.seed, out_override=args.out)
        if args.command == "generate-topology":
            return cmd_generate_topology(cfg, args.quiet)
        if args.command == "train":
            return cmd_train(cfg, args.quiet)
        if args.command == "baseline":
            return cmd_baseline(cfg, args.quiet)
        if args.command in ("simulate", "verify"):
            if not args.checkpoint:
                raise ConfigError(f"{args.command} requires --checkpoint")
            if args.command == "simulate":
                return cmd_simulate(cfg, args.checkpoint, args.quiet)
            return cmd_verify(cfg, args.checkpoint, args.quiet)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, DimensionError, StructureError, ParametrizationError, FileNotFoundError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, NumericError, ConvergenceError) as exc:
        print(f"error: numeric: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CertificateError as exc:
        print(f"error: verification: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except PhsyncError as exc:
        print(f"error: internal: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main_entry():
    sys.exit(main())
