"""Command-line workflows: chat, headless design, training, evaluation, export."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .dialogue import (
    DesignEngines,
    DesignSpec,
    DialogueState,
    GroundingContext,
    Phase,
    advance,
    run_design,
    validate_spec,
)
from .fixtures import DEFAULT_FIXTURE_ID, FIXTURES, fixture_converter
from .physics import DISABLED_RINGING, RingingParams, SamplingGrid
from .service import ApiConfig, create_app, write_report_artifacts
from .surrogate import (
    SurrogatePair,
    TrainingConfig,
    evaluate,
    generate_dataset,
    load_training_set,
    sample_operating_points,
    save_training_set,
    train_pair,
)


def _engines(args, pair: SurrogatePair | None = None) -> DesignEngines:
    cp = fixture_converter(getattr(args, "fixture", DEFAULT_FIXTURE_ID))
    grid = SamplingGrid.for_converter(cp, getattr(args, "grid", 512))
    return DesignEngines(cp=cp, grid=grid, pair=pair, seed=getattr(args, "seed", 0))


def cmd_chat(args) -> int:
    engines = _engines(args, _load_pair(args))
    grounding = GroundingContext.for_converter(engines.cp)
    state = DialogueState()
    print("Interactive modulation design (ctrl-d to quit).")
    print(f"Converter fixture: {args.fixture} "
          f"({engines.cp.v_in:g} V -> {engines.cp.v_out:g} V, "
          f"{engines.cp.p_rated:g} W rated)")
    print("You: ", end="", flush=True)
    for line in sys.stdin:
        text = line.strip()
        if not text:
            print("You: ", end="", flush=True)
            continue
        state, reply = advance(state, text, grounding, engines=engines)
        print(f"Assistant: {reply}\n")
        if state.phase is Phase.DONE:
            if args.out and state.report:
                refs = write_report_artifacts(state.report, Path(args.out))
                print(f"Artifacts written to {args.out}: {', '.join(refs)}")
            return 0
        print("You: ", end="", flush=True)
    return 0


def _load_pair(args) -> SurrogatePair | None:
    path = getattr(args, "pair", None)
    return SurrogatePair.load(path) if path else None


def cmd_design(args) -> int:
    spec_doc = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    spec = DesignSpec.from_dict(spec_doc)
    engines = _engines(args, _load_pair(args))
    grounding = GroundingContext.for_converter(engines.cp)
    problems = validate_spec(spec, grounding)
    if not spec.complete() or problems:
        missing = ", ".join(spec.missing())
        print("spec rejected:"
              + (f" missing fields: {missing}." if missing else "")
              + " ".join(str(p) for p in problems), file=sys.stderr)
        return 2
    report = run_design(spec, engines.cp, engines, grounding)
    out = Path(args.out)
    write_report_artifacts(report, out)
    print(f"report written to {out / 'report.json'}")
    if report.comparison:
        print(f"i_pp improvement over SPS: {100 * report.comparison.improvement_i_pp:.2f}%")
    return 0


def cmd_train(args) -> int:
    cp = fixture_converter(args.fixture)
    grid = SamplingGrid.for_converter(cp, args.grid)
    points = sample_operating_points(cp, args.data_size, seed=args.seed, grid=grid)
    ringing = (RingingParams(args.ringing, 8e5, 3e-6) if args.ringing > 0
               else DISABLED_RINGING)
    training = generate_dataset(cp, points, grid, ringing, seed=args.seed)
    cfg = TrainingConfig(epochs=args.epochs, seed=args.seed,
                         lambda_phys=0.0 if args.no_physics else args.lambda_phys)
    t0 = time.perf_counter()
    pair = train_pair(training, cp, cfg)
    train_s = time.perf_counter() - t0

    holdout_points = sample_operating_points(cp, 5, seed=args.seed + 1000, grid=grid,
                                             d0_range=(0.08, 0.42))
    holdout = generate_dataset(cp, holdout_points, grid, DISABLED_RINGING,
                               seed=args.seed + 1)
    report = evaluate(pair, cp, holdout)
    pair.meta["holdout_mae_i_l"] = report.mae_i_l
    pair.save(args.out)
    if args.save_data:
        save_training_set(training, args.save_data)
    print(f"trained pair ({'data-only' if cfg.lambda_phys == 0 else 'physics-informed'}) "
          f"in {train_s:.1f}s; checkpoint: {args.out}")
    print(f"holdout rollout MAE: {report.mae_i_l:.4f} A; "
          f"voltage MAE: {report.mae_v:.2f} V; "
          f"residual RMS: {report.physics_rms:.3f} V")
    return 0


def cmd_eval(args) -> int:
    pair = SurrogatePair.load(args.pair)
    holdout = load_training_set(args.holdout)
    if not holdout.items:
        print("holdout manifest is empty", file=sys.stderr)
        return 2
    cp = fixture_converter(args.fixture)
    report = evaluate(pair, cp, holdout)
    print(f"{'point':<42} {'MAE i_l [A]':>12} {'i_pp roll':>10} {'i_pp ref':>10}")
    for p in report.per_point:
        mp = p["op"]["mp"]
        label = f"{mp['strategy']} d0={mp['d0']:.4f} d1={mp['d1']:.3f} d2={mp['d2']:.3f}"
        print(f"{label:<42} {p['mae_i_l']:>12.4f} {p['i_pp_rollout']:>10.3f} "
              f"{p['i_pp_oracle']:>10.3f}")
    print(f"{'mean':<42} {report.mae_i_l:>12.4f}")
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(report.to_dict(), indent=2),
                                       encoding="utf-8")
    return 0


def cmd_export(args) -> int:
    from .service import SessionStore
    store = SessionStore(Path(args.data_dir))
    try:
        record = store.load(args.session)
    except KeyError:
        print(f"unknown session {args.session!r}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "session.json").write_text(json.dumps(record.to_dict(), indent=2,
                                                 sort_keys=True), encoding="utf-8")
    count = 1
    artifacts = store.artifacts_dir(args.session)
    if artifacts.exists():
        for p in sorted(artifacts.iterdir()):
            (out / p.name).write_bytes(p.read_bytes())
            count += 1
    print(f"exported {count} files to {out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn
    config = ApiConfig.from_env()
    if args.data_dir:
        config.data_dir = Path(args.data_dir)
    if args.pair:
        config.pair_checkpoint = Path(args.pair)
    host, _, port = (args.listen or config.listen).rpartition(":")
    app = create_app(config)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dabdesign",
        description="Modulation design assistant for dual active bridge converters")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--fixture", default=DEFAULT_FIXTURE_ID,
                       choices=sorted(FIXTURES))
        p.add_argument("--grid", type=int, default=512,
                       help="samples per switching period")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("chat", help="interactive design dialogue in the terminal")
    common(p)
    p.add_argument("--pair", help="surrogate checkpoint to evaluate with")
    p.add_argument("--out", help="directory for artifacts when the design finishes")
    p.set_defaults(fn=cmd_chat)

    p = sub.add_parser("design", help="run a design headlessly from a spec file")
    common(p)
    p.add_argument("--spec", required=True, help="JSON file with the design spec")
    p.add_argument("--pair", help="surrogate checkpoint to evaluate with")
    p.add_argument("--out", default="design-out", help="artifact directory")
    p.set_defaults(fn=cmd_design)

    p = sub.add_parser("train", help="train a surrogate pair on oracle waveforms")
    p.add_argument("--fixture", default=DEFAULT_FIXTURE_ID, choices=sorted(FIXTURES))
    p.add_argument("--grid", type=int, default=256)
    p.add_argument("--data-size", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=240)
    p.add_argument("--lambda-phys", type=float, default=1.0)
    p.add_argument("--no-physics", action="store_true",
                   help="train the data-only baseline (lambda_phys = 0)")
    p.add_argument("--ringing", type=float, default=0.0,
                   help="overshoot fraction for synthetic switching ringing")
    p.add_argument("--out", default="pair.json", help="checkpoint path")
    p.add_argument("--save-data", help="also save the training set directory")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint against a holdout set")
    p.add_argument("--fixture", default=DEFAULT_FIXTURE_ID, choices=sorted(FIXTURES))
    p.add_argument("--pair", required=True)
    p.add_argument("--holdout", required=True,
                   help="training-set directory with manifest.json")
    p.add_argument("--json-out", help="also dump the evaluation JSON")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("export", help="dump a stored session and its artifacts")
    p.add_argument("--session", required=True)
    p.add_argument("--data-dir", default="./dabdesign-data")
    p.add_argument("--out", default="export-out")
    p.set_defaults(fn=cmd_export)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--listen", help="host:port (default from environment)")
    p.add_argument("--data-dir")
    p.add_argument("--pair", help="surrogate checkpoint to serve designs with")
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
