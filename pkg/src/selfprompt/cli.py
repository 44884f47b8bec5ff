"""Command-line entry point.

Subcommands: ``fit`` (train and save a classifier), ``predict`` (masks and
prompt JSON per sample), ``eval`` (full experiment matrix to CSV/markdown),
``overlay`` (inspection PNGs). Configuration precedence: flags > optional
TOML config file (same field names) > built-in defaults. Identical argv and
input files produce byte-identical outputs.

Exit codes: 0 success, 1 runtime error (one-line diagnostic on stderr),
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .classifier import FewShotTrainSet, TrainConfig, fit_classifier, load_classifier, predict_probability_grid, save_classifier
from .data import PromptMode, load_manifest, write_mask
from .decoder import DecoderBackend, create_decoder
from .errors import ConfigError, SelfPromptError
from .evaluate import (
    ALL_MODES,
    FULL_SHOTS,
    ExperimentConfig,
    emit_overlay,
    emit_report,
    load_sample,
    predict_sample,
    run_experiment,
    sample_shots,
)
from .prompts import MorphConfig, PerturbConfig
from .rng import derive_seed

MODEL_PATH_ENV = "SELFPROMPT_DECODER"

_DEFAULTS = {
    "seed": 0,
    "shots": FULL_SHOTS,
    "folds": 5,
    "shot_counts": "10,20,40,full",
    "modes": ",".join(m.value for m in ALL_MODES),
    "mode": PromptMode.POINT_AND_BOX.value,
    "backend": "mock",
    "max_iterations": 1000,
    "tolerance": 1e-6,
    "reg_weight": 0.5,
    "erosion_iterations": 3,
    "dilation_iterations": 5,
    "perturb_max": 20,
    "perturb": True,
    "workers": 1,
    "dataset": None,
}


def _parse_flat_toml(text: str, path: str) -> dict:
    """Minimal flat key = value TOML subset for Pythons without tomllib."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            raise ConfigError(f"{path}:{lineno}: config file must be a flat table")
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        values[key.strip()] = _parse_toml_scalar(value.strip(), f"{path}:{lineno}")
    return values


def _parse_toml_scalar(token: str, where: str):
    if token.startswith("[") and token.endswith("]"):
        inner = token[1:-1].strip()
        if not inner:
            return []
        return [_parse_toml_scalar(part.strip(), where) for part in inner.split(",")]
    if len(token) >= 2 and token[0] == token[-1] and token[0] in "\"'":
        return token[1:-1]
    if token == "true":
        return True
    if token == "false":
        return False
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse value {token!r}") from None


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    text = p.read_text(encoding="utf-8")
    try:
        import tomllib  # Python >= 3.11

        return tomllib.loads(text)
    except ImportError:
        return _parse_flat_toml(text, str(p))
    except Exception as exc:
        raise ConfigError(f"config file {p}: {exc}") from exc


class _Options:
    """Flags > config file > defaults."""

    def __init__(self, args: argparse.Namespace):
        self._args = vars(args)
        self._file = _load_config_file(self._args.get("config"))

    def get(self, name: str, default=None):
        value = self._args.get(name)
        if value is not None:
            return value
        if name in self._file:
            return self._file[name]
        if name in _DEFAULTS:
            return _DEFAULTS[name] if _DEFAULTS[name] is not None else default
        return default


def _parse_shots(token) -> int | str:
    if token == FULL_SHOTS:
        return FULL_SHOTS
    try:
        return int(token)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid shot count {token!r} (integer or 'full')") from None


def _parse_shot_list(value) -> tuple:
    if isinstance(value, (list, tuple)):
        return tuple(_parse_shots(v) for v in value)
    return tuple(_parse_shots(part.strip()) for part in str(value).split(","))


def _parse_mode(value) -> PromptMode:
    try:
        return PromptMode(value)
    except ValueError:
        valid = ", ".join(m.value for m in PromptMode)
        raise ConfigError(f"unknown prompt mode {value!r} (valid: {valid})") from None


def _parse_mode_list(value) -> tuple:
    if isinstance(value, (list, tuple)):
        return tuple(_parse_mode(v) for v in value)
    return tuple(_parse_mode(part.strip()) for part in str(value).split(","))


def _parse_backend(spec: str) -> DecoderBackend:
    if spec == "mock":
        return DecoderBackend(kind="mock")
    if spec == "model" or spec.startswith("model:"):
        path = spec[6:] if spec.startswith("model:") else ""
        path = path or os.environ.get(MODEL_PATH_ENV, "")
        if not path:
            raise ConfigError(
                f"backend 'model' needs a path (model:<path> or ${MODEL_PATH_ENV})"
            )
        return DecoderBackend(kind="external-model", model_path=path)
    raise ConfigError(f"unknown backend {spec!r} (use 'mock' or 'model:<path>')")


def _train_config(opt: _Options) -> TrainConfig:
    return TrainConfig(
        max_iterations=int(opt.get("max_iterations")),
        convergence_tolerance=float(opt.get("tolerance")),
        regularization_weight=float(opt.get("reg_weight")),
        seed=int(opt.get("seed")),
    )


def _morph_config(opt: _Options) -> MorphConfig:
    return MorphConfig(
        erosion_iterations=int(opt.get("erosion_iterations")),
        dilation_iterations=int(opt.get("dilation_iterations")),
    )


def _perturb_config(opt: _Options) -> PerturbConfig:
    return PerturbConfig(
        max_pixels=int(opt.get("perturb_max")),
        seed=int(opt.get("seed")),
        enabled=bool(opt.get("perturb")),
    )


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--manifest", required=True, help="dataset manifest JSON")
    parser.add_argument("--seed", type=int, help="seed for every random draw (default 0)")
    parser.add_argument("--config", help="optional TOML config file (flags win)")


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--max-iterations", dest="max_iterations", type=int,
                        help="optimizer iteration cap (default 1000)")
    parser.add_argument("--tolerance", type=float,
                        help="relative objective-decrease stop (default 1e-6)")
    parser.add_argument("--reg-weight", dest="reg_weight", type=float,
                        help="L2 weight penalty lambda (default 0.5)")


def _add_prompt_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", help="decoder backend: mock | model:<path> (default mock)")
    parser.add_argument("--erosion-iterations", dest="erosion_iterations", type=int,
                        help="refinement erosion iterations (default 3)")
    parser.add_argument("--dilation-iterations", dest="dilation_iterations", type=int,
                        help="refinement dilation iterations (default 5)")
    parser.add_argument("--perturb-max", dest="perturb_max", type=int,
                        help="max outward box perturbation in px (default 20)")
    parser.add_argument("--no-perturb", dest="perturb", action="store_const", const=False,
                        help="disable box perturbation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="selfprompt",
        description="Self-prompting segmentation pipeline: train the pixel "
        "classifier, generate prompts, evaluate few-shot protocols.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="train the pixel classifier and save it")
    _add_common(fit)
    fit.add_argument("--out", required=True, help="output classifier file (SPLC)")
    fit.add_argument("--shots", help="training images sampled from the manifest "
                     "(integer or 'full', default full)")
    _add_train_flags(fit)

    predict = sub.add_parser("predict", help="write predicted masks and prompt JSON")
    _add_common(predict)
    predict.add_argument("--classifier", required=True, help="trained SPLC file")
    predict.add_argument("--out-dir", dest="out_dir", required=True)
    predict.add_argument("--mode", help="prompt mode (default point-and-box)")
    _add_prompt_flags(predict)

    evaluate = sub.add_parser("eval", help="run the fold x shots x mode experiment matrix")
    _add_common(evaluate)
    evaluate.add_argument("--out-csv", dest="out_csv", required=True)
    evaluate.add_argument("--out-md", dest="out_md", help="optional markdown summary")
    evaluate.add_argument("--folds", type=int, help="cross-validation folds (default 5)")
    evaluate.add_argument("--shots", dest="shot_counts",
                          help="comma list of shot counts (default 10,20,40,full)")
    evaluate.add_argument("--modes", help="comma list of prompt modes (default all)")
    evaluate.add_argument("--workers", type=int, help="parallel eval workers (default 1)")
    evaluate.add_argument("--dataset", help="dataset name for the report "
                          "(default: manifest stem)")
    _add_train_flags(evaluate)
    _add_prompt_flags(evaluate)

    overlay = sub.add_parser("overlay", help="write prediction/gt/prompt overlay PNGs")
    _add_common(overlay)
    overlay.add_argument("--classifier", required=True, help="trained SPLC file")
    overlay.add_argument("--out-dir", dest="out_dir", required=True)
    overlay.add_argument("--mode", help="prompt mode (default point-and-box)")
    _add_prompt_flags(overlay)

    return parser


def _cmd_fit(opt: _Options) -> int:
    manifest = load_manifest(opt.get("manifest"))
    shots = _parse_shots(opt.get("shots"))
    seed = int(opt.get("seed"))
    ids = sample_shots(manifest.ids(), shots, seed)
    samples = [load_sample(manifest.entry(sid)) for sid in ids]
    train_set = FewShotTrainSet(samples=tuple((s.embedding, s.gt_grid64) for s in samples))
    clf = fit_classifier(train_set, _train_config(opt))
    out = Path(opt.get("out"))
    out.parent.mkdir(parents=True, exist_ok=True)
    save_classifier(clf, out)
    print(f"fit {len(ids)} shots -> {out}")
    return 0


def _prompt_payload(sample_id: str, mode: PromptMode, prompts) -> dict:
    payload = {
        "id": sample_id,
        "mode": mode.value,
        "unpromptable": prompts is None,
        "space": None if prompts is None else prompts.space.value,
        "point": None,
        "box": None,
    }
    if prompts is not None and prompts.point is not None:
        payload["point"] = {
            "x": prompts.point.x, "y": prompts.point.y, "label": prompts.point.label,
        }
    if prompts is not None and prompts.box is not None:
        payload["box"] = {
            "x_min": prompts.box.x_min, "y_min": prompts.box.y_min,
            "x_max": prompts.box.x_max, "y_max": prompts.box.y_max,
        }
    return payload


def _run_per_sample(opt: _Options, write_outputs) -> int:
    manifest = load_manifest(opt.get("manifest"))
    clf = load_classifier(opt.get("classifier"))
    mode = _parse_mode(opt.get("mode"))
    decoder = create_decoder(_parse_backend(opt.get("backend")))
    morph = _morph_config(opt)
    base_perturb = _perturb_config(opt)
    out_dir = Path(opt.get("out_dir"))
    out_dir.mkdir(parents=True, exist_ok=True)
    for entry in manifest.entries:
        sample = load_sample(entry)
        coarse = predict_probability_grid(clf, sample.embedding)
        perturb = PerturbConfig(
            max_pixels=base_perturb.max_pixels,
            seed=derive_seed(base_perturb.seed, entry.id),
            enabled=base_perturb.enabled,
        )
        pred, prompts = predict_sample(
            sample.embedding, coarse, sample.geometry, mode, morph, perturb, decoder
        )
        write_outputs(out_dir, sample, mode, pred, prompts)
    print(f"processed {len(manifest)} samples -> {out_dir}")
    return 0


def _cmd_predict(opt: _Options) -> int:
    def write_outputs(out_dir, sample, mode, pred, prompts):
        write_mask(pred, out_dir / f"{sample.entry.id}.png")
        payload = _prompt_payload(sample.entry.id, mode, prompts)
        (out_dir / f"{sample.entry.id}.json").write_text(
            json.dumps(payload, indent=2) + "\n", encoding="utf-8"
        )

    return _run_per_sample(opt, write_outputs)


def _cmd_overlay(opt: _Options) -> int:
    def write_outputs(out_dir, sample, mode, pred, prompts):
        emit_overlay(
            (sample.entry.original_height, sample.entry.original_width),
            pred, sample.gt_original, prompts,
            out_dir / f"{sample.entry.id}_overlay.png",
        )

    return _run_per_sample(opt, write_outputs)


def _cmd_eval(opt: _Options) -> int:
    manifest_path = Path(opt.get("manifest"))
    manifest = load_manifest(manifest_path)
    dataset = opt.get("dataset") or manifest_path.stem
    config = ExperimentConfig(
        dataset=dataset,
        folds=int(opt.get("folds")),
        shot_counts=_parse_shot_list(opt.get("shot_counts")),
        modes=_parse_mode_list(opt.get("modes")),
        seed=int(opt.get("seed")),
        train=_train_config(opt),
        morph=_morph_config(opt),
        perturb=_perturb_config(opt),
        backend=_parse_backend(opt.get("backend")),
        workers=int(opt.get("workers")),
    )
    report = run_experiment(config, manifest)
    out_csv = Path(opt.get("out_csv"))
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    out_md = opt.get("out_md")
    emit_report(report, out_csv, out_md)
    print(f"report -> {out_csv}")
    return 0


_COMMANDS = {
    "fit": _cmd_fit,
    "predict": _cmd_predict,
    "eval": _cmd_eval,
    "overlay": _cmd_overlay,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](_Options(args))
    except (SelfPromptError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
