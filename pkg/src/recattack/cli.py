"""Command-line front end.

Subcommands: ``train`` (models, boosted pairs, manifests), ``attack``
(robust-accuracy CSV for a set of attacks), ``sweep`` (a parameter grid per
attack, with a rendered curve), ``verify`` (the self-checking suites as a
JSON report), and ``cross-matrix`` (model-vs-model robustness, with a
rendered heatmap).  All structured inputs and outputs are JSON; tabular
results are CSV.  Every command is deterministic given --seed: per-example
and per-grid-point seeds are derived with the SplitMix64 mix, so --threads
never changes any output byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import reporting
from .arc import arc, arc_blc
from .attacks import (
    AttackConfig,
    apgd,
    apgd_logits,
    pgd_first,
    randomized_pgd_eval,
    with_restarts,
)
from .ensemble import (
    RandomizedEnsemble,
    cross_robustness_matrix,
    expected_accuracy,
    load_dataset,
    robust_accuracy,
    save_dataset,
)
from .lab import ModelSpec, TrainConfig, make_dataset, train, train_bat_pair
from .models import LabeledExample, load_model, save_model
from .seeding import derive_seed
from .verify import run_all_suites


class ConfigError(ValueError):
    """Raised for malformed config files; the message names the field."""


def _require(doc: dict, field: str, where: str):
    if field not in doc:
        raise ConfigError(f"{where}: missing field {field!r}")
    return doc[field]


def _load_json(path: "str | Path", where: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"{where}: file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{where}: invalid JSON ({exc})") from None


def _arc_blc_adapter(rec, x, y, cfg, rng=None):
    return arc_blc(rec, x, y, cfg.eps, cfg.p, cfg.rho_coef)


def _apgd_random(rec, x, y, cfg, rng=None):
    return apgd(rec, x, y, replace(cfg, init="random"), rng=rng)


def _apgd_restarts(rec, x, y, cfg, rng=None):
    cfg = replace(cfg, init="random", restarts=max(cfg.restarts, 2))
    return with_restarts(apgd, rec, x, y, cfg, rng)


ATTACKS = {
    "pgd": randomized_pgd_eval,
    "pgd1": pgd_first,
    "apgd": apgd,
    "apgd+r": _apgd_random,
    "apgd+rr": _apgd_restarts,
    "apgd-l": apgd_logits,
    "arc": arc,
    "arc-blc": _arc_blc_adapter,
}

# cross-matrix needs the perturbation itself, which rules out the
# attacker-averaged evaluation
MATRIX_ATTACKS = {
    "pgd": pgd_first,
    "apgd": apgd,
    "apgd-l": apgd_logits,
    "arc": arc,
}


def _resolve_dataset(doc, base: Path, where: str) -> list[LabeledExample]:
    if isinstance(doc, str):
        return load_dataset(base / doc if not Path(doc).is_absolute() else doc)
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: dataset must be a path or a generator object")
    if "path" in doc:
        p = Path(doc["path"])
        return load_dataset(base / p if not p.is_absolute() else p)
    for field in ("tag", "class_count", "dim", "n", "seed"):
        _require(doc, field, f"{where}.dataset")
    return list(
        make_dataset(doc["tag"], doc["class_count"], doc["dim"], doc["n"], doc["seed"])
    )


def _load_ensemble(path: "str | Path") -> tuple[RandomizedEnsemble, list[str]]:
    path = Path(path)
    doc = _load_json(path, "ensemble file")
    members = _require(doc, "members", "ensemble file")
    alpha = _require(doc, "alpha", "ensemble file")
    if not isinstance(members, list) or not members:
        raise ConfigError("ensemble file: field 'members' must be a nonempty list")
    models = []
    for entry in members:
        p = Path(entry)
        models.append(load_model(path.parent / p if not p.is_absolute() else p))
    try:
        rec = RandomizedEnsemble(models, alpha)
    except ValueError as exc:
        raise ConfigError(f"ensemble file: field 'alpha' invalid: {exc}") from None
    return rec, [Path(m).stem for m in members]


def _resolve_target(cfg: dict, base: Path) -> tuple[RandomizedEnsemble, list[str]]:
    if "ensemble" in cfg:
        p = Path(cfg["ensemble"])
        return _load_ensemble(base / p if not p.is_absolute() else p)
    if "model" in cfg:
        p = Path(cfg["model"])
        model = load_model(base / p if not p.is_absolute() else p)
        return RandomizedEnsemble([model], [1.0]), [p.stem]
    raise ConfigError("attack config: missing field 'ensemble' (or 'model')")


def _attack_config(doc: dict, where: str) -> AttackConfig:
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: attack_config must be an object")
    try:
        return AttackConfig.from_json_dict(doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _dump_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _config_hash(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True).encode("utf-8")
    ).hexdigest()


def _alpha_cell(alpha: np.ndarray) -> str:
    return ":".join(reporting.format_accuracy(a) for a in alpha)


def _clean_accuracy(rec: RandomizedEnsemble, dataset: Sequence[LabeledExample]) -> float:
    return float(np.mean([expected_accuracy(rec, ex.x, ex.y) for ex in dataset]))


def _eval_attack(
    name: str,
    rec: RandomizedEnsemble,
    dataset: Sequence[LabeledExample],
    cfg: AttackConfig,
    seed: int,
    threads: int,
    clean: float,
) -> float:
    if cfg.eps == 0.0:
        return clean
    if name not in ATTACKS:
        raise ConfigError(f"unknown attack {name!r}; choose from {sorted(ATTACKS)}")
    return robust_accuracy(
        rec, ATTACKS[name], dataset, cfg, master_seed=seed, threads=threads
    )


# --- commands ---------------------------------------------------------------


def cmd_train(
    config: dict, out_dir: Path, seed: Optional[int] = None, base: Path = Path(".")
) -> list[Path]:
    """Train a model (or a boosted pair) and write model + manifest files."""
    model_doc = _require(config, "model", "train config")
    spec = ModelSpec(
        kind=_require(model_doc, "kind", "train config.model"),
        hidden=tuple(model_doc.get("hidden", ())),
        activation=model_doc.get("activation", "tanh"),
    )
    dataset = _resolve_dataset(
        _require(config, "dataset", "train config"), base, "train config"
    )
    train_doc = _require(config, "train", "train config")
    used_seed = seed if seed is not None else train_doc.get("seed", 0)
    adv = train_doc.get("adversarial")
    tc = TrainConfig(
        epochs=_require(train_doc, "epochs", "train config.train"),
        batch_size=_require(train_doc, "batch_size", "train config.train"),
        lr=_require(train_doc, "lr", "train config.train"),
        seed=used_seed,
        momentum=train_doc.get("momentum", 0.0),
        adversarial=_attack_config(adv, "train config.adversarial") if adv else None,
    )
    name = config.get("name", "model")
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs: list[Path] = []

    bat = config.get("bat")
    if bat:
        alpha = bat.get("alpha", [0.9, 0.1])
        rec = train_bat_pair(spec, dataset, tc, alpha=alpha)
        for i, member in enumerate(rec.members, start=1):
            member_path = out_dir / f"{name}_f{i}.json"
            save_model(member, member_path)
            outputs.append(member_path)
        ens_path = out_dir / f"{name}_ensemble.json"
        _dump_json(
            ens_path,
            {"members": [p.name for p in outputs], "alpha": list(map(float, alpha))},
        )
        outputs.append(ens_path)
    else:
        model = train(spec, dataset, tc)
        model_path = out_dir / f"{name}.json"
        save_model(model, model_path)
        outputs.append(model_path)

    ds_path = out_dir / f"{name}_dataset.json"
    save_dataset(dataset, ds_path)
    outputs.append(ds_path)

    manifest = {
        "command": "train",
        "seed": used_seed,
        "config_sha256": _config_hash(config),
        "outputs": [p.name for p in outputs],
    }
    manifest_path = out_dir / f"{name}_manifest.json"
    _dump_json(manifest_path, manifest)
    outputs.append(manifest_path)
    return outputs


_ATTACK_HEADER = [
    "attack", "p", "eps", "steps", "eta", "alpha", "clean_acc", "robust_acc", "seed",
]


def _result_row(
    name: str, cfg: AttackConfig, alpha: np.ndarray, clean: float, robust: float, seed: int
) -> list[str]:
    return [
        name,
        str(cfg.p),
        reporting.format_number(cfg.eps),
        str(cfg.steps),
        reporting.format_number(cfg.eta) if cfg.eps > 0 else reporting.format_number(0.0),
        _alpha_cell(alpha),
        reporting.format_accuracy(clean),
        reporting.format_accuracy(robust),
        str(seed),
    ]


def cmd_attack(
    config: dict,
    out_csv: Path,
    seed: int = 0,
    threads: int = 1,
    base: Path = Path("."),
    figures: bool = True,
) -> Path:
    """One CSV row per requested attack on the configured target."""
    rec, _ = _resolve_target(config, base)
    dataset = _resolve_dataset(_require(config, "dataset", "attack config"), base, "attack config")
    names = _require(config, "attacks", "attack config")
    cfg = _attack_config(_require(config, "attack_config", "attack config"), "attack config")
    clean = _clean_accuracy(rec, dataset)
    rows = []
    robusts = []
    for name in names:
        robust = _eval_attack(name, rec, dataset, cfg, seed, threads, clean)
        robusts.append(robust)
        rows.append(_result_row(name, cfg, rec.alpha, clean, robust, seed))
    reporting.write_csv(out_csv, _ATTACK_HEADER, rows)
    if figures:
        reporting.render_attack_figure(
            reporting.figure_path(out_csv), list(names), clean, robusts
        )
    return out_csv


def cmd_sweep(
    config: dict,
    out_csv: Path,
    seed: int = 0,
    threads: int = 1,
    base: Path = Path("."),
    figures: bool = True,
) -> Path:
    """Evaluate every (grid point, attack) pair; render the curves."""
    rec, _ = _resolve_target(config, base)
    dataset = _resolve_dataset(_require(config, "dataset", "sweep config"), base, "sweep config")
    names = _require(config, "attacks", "sweep config")
    cfg = _attack_config(_require(config, "attack_config", "sweep config"), "sweep config")
    sweep = _require(config, "sweep", "sweep config")
    axis = _require(sweep, "axis", "sweep config.sweep")
    grid = _require(sweep, "grid", "sweep config.sweep")
    if axis not in ("alpha", "epsilon", "steps"):
        raise ConfigError(f"sweep config: axis must be alpha|epsilon|steps, got {axis!r}")
    if not isinstance(grid, list) or not grid:
        raise ConfigError("sweep config: grid must be a nonempty list")
    if not all(np.isfinite(grid)):
        raise ConfigError("sweep config: grid values must be finite")
    if sorted(grid) != grid:
        raise ConfigError("sweep config: grid must be sorted ascending")
    if axis == "alpha":
        if rec.size != 2:
            raise ConfigError("sweep config: alpha sweeps need a 2-member ensemble")
        if any(not 0.0 <= a <= 1.0 for a in grid):
            raise ConfigError("sweep config: alpha grid values must lie in [0, 1]")
    if axis == "epsilon" and any(e < 0 for e in grid):
        raise ConfigError("sweep config: epsilon grid values must be nonnegative")
    if axis == "steps" and any(int(k) != k or k < 1 for k in grid):
        raise ConfigError("sweep config: steps grid values must be positive integers")

    rows = []
    series: dict[str, list[float]] = {name: [] for name in names}
    for point_index, value in enumerate(grid):
        point_seed = derive_seed(seed, point_index)
        point_rec, point_cfg = rec, cfg
        if axis == "alpha":
            point_rec = rec.reweighted([value, 1.0 - value])
        elif axis == "epsilon":
            point_cfg = replace(cfg, eps=float(value))
        else:
            point_cfg = replace(cfg, steps=int(value))
        clean = _clean_accuracy(point_rec, dataset)
        for name in names:
            robust = _eval_attack(name, point_rec, dataset, point_cfg, point_seed, threads, clean)
            alpha_out = (
                np.array([value, 1.0 - value]) if axis == "alpha" else rec.alpha
            )
            rows.append(_result_row(name, point_cfg, alpha_out, clean, robust, point_seed))
            series[name].append(robust)
    reporting.write_csv(out_csv, _ATTACK_HEADER, rows)
    if figures:
        reporting.render_sweep_figure(
            reporting.figure_path(out_csv), axis, list(grid), series
        )
    return out_csv


def cmd_verify(
    config: Optional[dict], out_json: Path, seed: int = 0, mutate: Optional[str] = None
) -> dict:
    """Run the verification suites and write the JSON report."""
    trials = (config or {}).get("trials", {})
    report = run_all_suites(
        seed=seed,
        consistency_trials=trials.get("consistency", 10_000),
        inconsistency_trials=trials.get("inconsistency", 100),
        auxiliary_trials=trials.get("auxiliary_equivalence", 1000),
        hyperplane_trials=trials.get("hyperplane_projection", 100),
        jacobian_trials=trials.get("jacobian", 100),
        corrupt=mutate,
    )
    _dump_json(out_json, report)
    return report


def cmd_cross_matrix(
    config: dict,
    out_csv: Path,
    seed: int = 0,
    threads: int = 1,
    base: Path = Path("."),
    figures: bool = True,
) -> Path:
    """M x M robustness matrix: rows evaluated, columns attacked."""
    paths = _require(config, "models", "cross-matrix config")
    if not isinstance(paths, list) or not paths:
        raise ConfigError("cross-matrix config: field 'models' must be a nonempty list")
    models = []
    for entry in paths:
        p = Path(entry)
        models.append(load_model(base / p if not p.is_absolute() else p))
    labels = [Path(p).stem for p in paths]
    dataset = _resolve_dataset(
        _require(config, "dataset", "cross-matrix config"), base, "cross-matrix config"
    )
    cfg = _attack_config(
        _require(config, "attack_config", "cross-matrix config"), "cross-matrix config"
    )
    attack_name = config.get("attack", "pgd")
    if attack_name not in MATRIX_ATTACKS:
        raise ConfigError(
            f"cross-matrix config: attack must be one of {sorted(MATRIX_ATTACKS)}"
        )
    if cfg.eps == 0.0:
        clean = [
            float(np.mean([m.decide(ex.x) == ex.y for ex in dataset])) for m in models
        ]
        matrix = np.tile(np.array(clean)[:, None], (1, len(models)))
    else:
        matrix = cross_robustness_matrix(
            models, MATRIX_ATTACKS[attack_name], dataset, cfg,
            master_seed=seed, threads=threads,
        )
    header = ["evaluated"] + [f"attacked_{label}" for label in labels]
    rows = [
        [labels[i]] + [reporting.format_accuracy(v) for v in matrix[i]]
        for i in range(len(models))
    ]
    reporting.write_csv(out_csv, header, rows)
    if figures:
        reporting.render_matrix_figure(reporting.figure_path(out_csv), matrix, labels)
    return out_csv


# --- argument parsing -------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="recattack",
        description="Attacks and verification suites for randomized ensembles of classifiers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
        p.add_argument("--config", required=config_required, help="JSON config file")
        p.add_argument("--out", required=True, help="output path")
        p.add_argument(
            "--seed", type=int, default=None,
            help="64-bit master seed (default 0; for train, the config's seed)",
        )
        p.add_argument("--threads", type=int, default=1, help="worker threads")

    common(sub.add_parser("train", help="train models and write manifests"))
    p_attack = sub.add_parser("attack", help="run attacks, write a results CSV")
    common(p_attack)
    p_attack.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    p_sweep = sub.add_parser("sweep", help="evaluate attacks over a parameter grid")
    common(p_sweep)
    p_sweep.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    p_verify = sub.add_parser("verify", help="run the verification suites")
    common(p_verify, config_required=False)
    p_verify.add_argument(
        "--mutate", choices=["beta"], default=None,
        help="intentionally corrupt the named internal to check the harness bites",
    )
    p_matrix = sub.add_parser("cross-matrix", help="model-vs-model robustness matrix")
    common(p_matrix)
    p_matrix.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    seed = 0 if args.seed is None else args.seed
    try:
        config = _load_json(args.config, f"{args.command} config") if args.config else None
        base = Path(args.config).parent if args.config else Path(".")
        out = Path(args.out)
        if args.command == "train":
            outputs = cmd_train(config, out, seed=args.seed, base=base)
            print(f"wrote {len(outputs)} files to {out}")
        elif args.command == "attack":
            cmd_attack(
                config, out, seed=seed, threads=args.threads, base=base,
                figures=not args.no_figures,
            )
            print(f"wrote {out}")
        elif args.command == "sweep":
            cmd_sweep(
                config, out, seed=seed, threads=args.threads, base=base,
                figures=not args.no_figures,
            )
            print(f"wrote {out}")
        elif args.command == "verify":
            report = cmd_verify(config, out, seed=seed, mutate=args.mutate)
            for name, suite in report["suites"].items():
                status = "pass" if suite["passed"] else "FAIL"
                print(f"{name}: {status} ({suite['failures']}/{suite['trials']} failures)")
            if not report["passed"]:
                return 1
        elif args.command == "cross-matrix":
            cmd_cross_matrix(
                config, out, seed=seed, threads=args.threads, base=base,
                figures=not args.no_figures,
            )
            print(f"wrote {out}")
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
