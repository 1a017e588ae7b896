"""
Command-line entry point

    python -m src.cli pretrain-base --config run.json --out runs/base
    python -m src.cli train --config run.json --base runs/base/base.ckpt --out runs/1
    python -m src.cli landscape --checkpoint runs/1/checkpoint.ckpt --grid 3 --span 0.1 --out runs/1/landscape

Exit codes: 0 success, 1 config error, 2 runtime / numeric error, 3 checkpoint integrity error.
"""

import functools
import json
import logging
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import click
import numpy as np
import typer

from src.config.run_config import RunConfig, config_from_dict, config_hash, parse_config, write_config
from src.config.settings import log_level
from src.control import competent_base, eval_counterfact, get_scenario, reports_table, run_control_training, write_report
from src.control.harness import build_control_plan
from src.data import CLASS_WORDS, dump_jsonl, make_dataset
from src.diagnostics import (
    depth_sweep,
    length_sweep,
    loss_landscape,
    position_ablation,
    rank_sweep,
    segment_ablation,
    write_landscape,
    write_table,
)
from src.errors import ConfigError, MRTError
from src.model import FrozenWeights, ToyModelConfig, ToyMultimodalModel, dataset_loss, pretrain_base
from src.storage import Checkpoint, load_checkpoint, save_checkpoint
from src.train import evaluate, train_editors, write_metrics

logger = logging.getLogger(__name__)

app = typer.Typer(add_completion=False, help="Representation-editor tuning on a toy vision-language model.")

ConfigOption = typer.Option(None, "--config", "-c", help="JSON run config (defaults when omitted)")
OutOption = typer.Option(None, "--out", "-o", help="Artifact directory (overrides paths.out_dir)")
BaseOption = typer.Option(None, "--base", help="Base checkpoint (overrides paths.base_checkpoint)")


def _command(fn: Callable) -> Callable:
    """Map toolkit errors to exit codes and flag partial outputs."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        logging.basicConfig(level=log_level(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")
        try:
            return fn(*args, **kwargs)
        except MRTError as e:
            _flag_partial(kwargs.get("out"), e)
            typer.echo(f"❌ {type(e).__name__}: {e}", err=True)
            raise typer.Exit(code=e.exit_code)
        except (click.exceptions.Exit, click.exceptions.Abort, click.ClickException):
            raise
        except Exception as e:
            _flag_partial(kwargs.get("out"), e)
            typer.echo(f"❌ {type(e).__name__}: {e}", err=True)
            raise typer.Exit(code=2)

    return wrapper


def _flag_partial(out: Optional[str], error: Exception) -> None:
    if out and Path(out).is_dir():
        (Path(out) / "FAILED.txt").write_text(f"{type(error).__name__}: {error}\n")


def _setup(config: Optional[Path], out: Optional[str]) -> Tuple[RunConfig, Path]:
    cfg = parse_config(config)
    out_dir = Path(out or cfg.paths.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_config(cfg, out_dir)
    return cfg, out_dir


def _base(cfg: RunConfig, base: Optional[str]) -> FrozenWeights:
    path = base or cfg.paths.base_checkpoint
    if path:
        return load_checkpoint(path, cfg.model).weights
    typer.echo("⚠️  No base checkpoint given; pretraining a fresh base")
    return pretrain_base(cfg.model, cfg.seed, settings=cfg.pretrain)


def _size(model_cfg: ToyModelConfig) -> dict:
    return dict(image_size=model_cfg.image_size, patch_size=model_cfg.patch_size)


@app.command("pretrain-base")
@_command
def pretrain_base_cmd(config: Optional[Path] = ConfigOption, out: Optional[str] = OutOption):
    """Pretrain the frozen base and save it as base.ckpt."""
    cfg, out_dir = _setup(config, out)
    weights = pretrain_base(cfg.model, cfg.seed, settings=cfg.pretrain)
    model = ToyMultimodalModel(cfg.model, weights)
    test = make_dataset("classify", cfg.data.test_per_class, cfg.data.seed, split="test", **_size(cfg.model))
    accuracy = evaluate(model, None, None, test)
    yesno = make_dataset("yesno", cfg.data.test_per_class, cfg.data.seed, split="test", **_size(cfg.model))
    yesno_accuracy = evaluate(model, None, None, yesno)
    save_checkpoint(
        Checkpoint(cfg.model, weights, run_config=cfg.model_dump(mode="json"), config_hash=config_hash(cfg)),
        out_dir / "base.ckpt",
    )
    summary = {"classify_accuracy": accuracy, "yesno_accuracy": yesno_accuracy, "base_digest": weights.digest(), "params": weights.param_count()}
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    typer.echo(f"✅ Base saved to {out_dir / 'base.ckpt'} (classify accuracy {accuracy:.3f}, yes/no {yesno_accuracy:.3f})")


@app.command("train")
@_command
def train_cmd(config: Optional[Path] = ConfigOption, out: Optional[str] = OutOption, base: Optional[str] = BaseOption):
    """Train editors; writes metrics.csv, summary.json and checkpoint.ckpt."""
    cfg, out_dir = _setup(config, out)
    weights = _base(cfg, base)
    before = weights.digest()
    model = ToyMultimodalModel(cfg.model, weights)
    train_set = cfg.data.build("train", **_size(cfg.model))
    test_set = cfg.data.build("test", **_size(cfg.model))

    editors, metrics = train_editors(model, cfg.plan, train_set, cfg.train, eval_set=test_set)
    train_loss = dataset_loss(model, editors, cfg.plan, train_set)
    after = weights.digest()
    write_metrics(
        metrics,
        out_dir,
        {"seed": cfg.seed, "config_hash": config_hash(cfg), "train_loss": train_loss,
         "base_digest_before": before, "base_digest_after": after},
    )
    save_checkpoint(
        Checkpoint(
            cfg.model, weights, editors, plan=cfg.plan, run_config=cfg.model_dump(mode="json"),
            config_hash=config_hash(cfg), train_loss=train_loss,
            rng_state=metrics.rng_state,
        ),
        out_dir / "checkpoint.ckpt",
    )
    typer.echo(
        f"✅ Trained {len(editors)} editors: accuracy {metrics.final_accuracy:.3f}, "
        f"trainable {100 * metrics.trainable_fraction:.2f}%"
    )


@app.command("eval")
@_command
def eval_cmd(
    checkpoint: Path = typer.Option(..., "--checkpoint", help="Checkpoint from `train`"),
    config: Optional[Path] = ConfigOption,
    out: Optional[str] = OutOption,
):
    """Exact-match accuracy of a trained checkpoint on the configured test split."""
    cfg, out_dir = _setup(config, out)
    ckpt = load_checkpoint(checkpoint, cfg.model)
    test_set = cfg.data.build("test", **_size(cfg.model))
    accuracy = evaluate(ckpt.model(), ckpt.editors, ckpt.plan, test_set)
    (out_dir / "eval.json").write_text(json.dumps({"accuracy": accuracy, "samples": len(test_set)}, indent=2))
    typer.echo(f"✅ Accuracy {accuracy:.3f} on {len(test_set)} samples")


def _control_name(kind: str, target: int) -> str:
    return f"control_{kind}_{CLASS_WORDS[target]}.ckpt"


@app.command("control-train")
@_command
def control_train_cmd(config: Optional[Path] = ConfigOption, out: Optional[str] = OutOption, base: Optional[str] = BaseOption):
    """Train one control editor set per target class."""
    cfg, out_dir = _setup(config, out)
    model = ToyMultimodalModel(cfg.model, _base(cfg, base))
    first = cfg.control.scenario_for(cfg.control.targets[0])
    model, accuracy = competent_base(model, get_scenario(first), cfg.control, seed=cfg.data.seed)
    weights = model.weights
    typer.echo(f"✅ Base yes/no accuracy {accuracy:.3f}")
    reports = []
    for target in cfg.control.targets:
        spec = cfg.control.scenario_for(target)
        editors, report = run_control_training(model, spec, cfg.control, seed=cfg.data.seed)
        plan = build_control_plan(cfg.model, get_scenario(spec), cfg.control.visual_rank, cfg.control.multimodal_rank)
        save_checkpoint(
            Checkpoint(cfg.model, weights, editors, plan=plan, run_config=cfg.model_dump(mode="json"),
                       config_hash=config_hash(cfg)),
            out_dir / _control_name(spec.kind, target),
        )
        write_report(report, out_dir / "train_reports")
        reports.append(report)
        typer.echo(f"✅ {spec.kind} on {CLASS_WORDS[target]}: train counterfact rate {report.counterfact_rate:.3f}")
    write_table(reports_table(reports), out_dir / "control_train.csv")


@app.command("control-eval")
@_command
def control_eval_cmd(
    editors_dir: Path = typer.Option(..., "--editors", help="Directory written by control-train"),
    config: Optional[Path] = ConfigOption,
    out: Optional[str] = OutOption,
):
    """Counterfact rate and disruption of trained control editors on the test split."""
    cfg, out_dir = _setup(config, out)
    reports = []
    for target in cfg.control.targets:
        spec = cfg.control.scenario_for(target)
        path = editors_dir / _control_name(spec.kind, target)
        if not path.exists():
            raise ConfigError(f"no trained control editors at {path}; run control-train first")
        ckpt = load_checkpoint(path, cfg.model)
        scenario = get_scenario(spec)
        test_set = scenario.clean_dataset(cfg.control.test_per_class, cfg.data.seed, "test", **_size(cfg.model))
        model = ckpt.model()
        report = eval_counterfact(model, ckpt.editors, ckpt.plan, scenario, test_set)
        write_report(report, out_dir)
        reports.append(report)
        typer.echo(
            f"✅ {spec.kind} on {CLASS_WORDS[target]}: counterfact {report.counterfact_rate:.3f}, "
            f"disruption {report.other_class_disruption:.3f}"
        )
    write_table(reports_table(reports), out_dir / "control_eval.csv")


def _sweep(fn: Callable, name: str, config: Optional[Path], out: Optional[str], base: Optional[str], workers: Optional[int]):
    cfg, out_dir = _setup(config, out)
    weights = _base(cfg, base)
    frame = fn(cfg.model, weights, cfg.sweep, cfg.data, workers)
    path = write_table(frame, out_dir / f"{name}.csv")
    skipped = int((frame["status"] == "skipped").sum()) if "status" in frame else 0
    note = f" ({skipped} skipped)" if skipped else ""
    typer.echo(f"✅ {len(frame)} rows written to {path}{note}")


WorkersOption = typer.Option(None, "--workers", help="Worker processes (defaults to MRT_THREADS)")


@app.command("sweep-rank")
@_command
def sweep_rank_cmd(config: Optional[Path] = ConfigOption, out: Optional[str] = OutOption,
                   base: Optional[str] = BaseOption, workers: Optional[int] = WorkersOption):
    """Visual x multimodal rank grid."""
    _sweep(rank_sweep, "rank_sweep", config, out, base, workers)


@app.command("sweep-depth")
@_command
def sweep_depth_cmd(config: Optional[Path] = ConfigOption, out: Optional[str] = OutOption,
                    base: Optional[str] = BaseOption, workers: Optional[int] = WorkersOption):
    """Editing depth settings a-e."""
    _sweep(depth_sweep, "depth_sweep", config, out, base, workers)


@app.command("sweep-length")
@_command
def sweep_length_cmd(config: Optional[Path] = ConfigOption, out: Optional[str] = OutOption,
                     base: Optional[str] = BaseOption, workers: Optional[int] = WorkersOption):
    """Tied prefix / suffix lengths."""
    _sweep(length_sweep, "length_sweep", config, out, base, workers)


@app.command("sweep-segment")
@_command
def sweep_segment_cmd(config: Optional[Path] = ConfigOption, out: Optional[str] = OutOption,
                      base: Optional[str] = BaseOption, workers: Optional[int] = WorkersOption):
    """Prefix-only / suffix-only / both / all."""
    _sweep(segment_ablation, "segment_ablation", config, out, base, workers)


@app.command("sweep-position")
@_command
def sweep_position_cmd(config: Optional[Path] = ConfigOption, out: Optional[str] = OutOption,
                       base: Optional[str] = BaseOption, workers: Optional[int] = WorkersOption):
    """Full plan versus the plan without each editor family."""
    _sweep(position_ablation, "position_ablation", config, out, base, workers)


@app.command("landscape")
@_command
def landscape_cmd(
    checkpoint: Path = typer.Option(..., "--checkpoint", help="Checkpoint from `train`"),
    config: Optional[Path] = ConfigOption,
    out: Optional[str] = OutOption,
    grid: Optional[int] = typer.Option(None, "--grid", help="Odd grid resolution"),
    span: Optional[float] = typer.Option(None, "--span", help="alpha, beta range [-span, span]"),
    emit_matrix: bool = typer.Option(False, "--emit-matrix", help="Also write a whitespace loss matrix"),
):
    """Training-loss grid around the trained editors."""
    cfg, out_dir = _setup(config, out)
    ckpt = load_checkpoint(checkpoint)
    if ckpt.plan is None:
        raise ConfigError(f"checkpoint {checkpoint} holds no trained editors")
    updates = {k: v for k, v in {"resolution": grid, "span": span}.items() if v is not None}
    landscape_cfg = config_from_dict(
        {**cfg.model_dump(mode="json"), "landscape": {**cfg.landscape.model_dump(), **updates}}, "--grid/--span"
    ).landscape
    run_cfg = config_from_dict(ckpt.run_config, str(checkpoint)) if ckpt.run_config else cfg
    train_set = run_cfg.data.build("train", **_size(ckpt.model_config))

    result = loss_landscape(ckpt.model(), ckpt.editors, ckpt.plan, train_set, landscape_cfg)
    path = write_landscape(result, out_dir / "landscape.csv", emit_matrix or landscape_cfg.emit_matrix)
    summary = {"center_loss": result.center, "checkpoint_loss": ckpt.train_loss,
               "finite": bool(np.isfinite(result.losses).all())}
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    typer.echo(f"✅ {result.losses.size} cells written to {path} (center {result.center:.6f})")


@app.command("dump-data")
@_command
def dump_data_cmd(config: Optional[Path] = ConfigOption, out: Optional[str] = OutOption):
    """Write the configured train and test splits as JSON lines."""
    cfg, out_dir = _setup(config, out)
    for split in ("train", "test"):
        samples = cfg.data.build(split, **_size(cfg.model))
        dump_jsonl(samples, out_dir / f"{split}.jsonl")
        typer.echo(f"✅ {len(samples)} {split} samples written")


def main(argv: Optional[List[str]] = None) -> int:
    """Run the CLI and return its exit code."""
    try:
        result = app(args=argv, standalone_mode=False)
    except click.exceptions.ClickException as e:
        e.show()
        return e.exit_code
    except click.exceptions.Abort:
        return 1
    except Exception as e:
        typer.echo(f"❌ {type(e).__name__}: {e}", err=True)
        return 2
    return result if isinstance(result, int) else 0


if __name__ == "__main__":
    raise SystemExit(main())
