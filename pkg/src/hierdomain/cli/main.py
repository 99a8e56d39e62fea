#!/usr/bin/python3

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

import hierdomain as hd


def _oracle(args, manifest: hd.Manifest) -> hd.Oracle:
    record = Path(args.record) if args.record else None
    if args.oracle == hd.ReplayOracle.shortname():
        if not args.transcript:
            raise ValueError("--oracle replay needs --transcript")
        return hd.ReplayOracle(Path(args.transcript), record)
    if args.oracle == hd.LiveOracle.shortname():
        oracle = hd.LiveOracle(hd.LiveEndpoint.from_environ(), record)
        oracle.preflight()
        return oracle
    return hd.ScriptedOracle(manifest.reference_domain(), manifest.script, record)


def cmd_learn(args) -> int:
    manifest = hd.Manifest.load(Path(args.manifest))
    budgets = hd.Budgets(
        args.budget_interactions if args.budget_interactions is not None else manifest.budgets.interactions,
        args.budget_replans if args.budget_replans is not None else manifest.budgets.replans,
    )
    config = hd.LearnerConfig(seed=args.seed, max_depth=args.max_depth)
    ew = hd.EWConfig(walks=args.walks, seed=args.seed) if args.ew else None
    oracle = _oracle(args, manifest)
    report, _ = hd.run_learning(manifest, oracle, config, budgets, Path(args.out) if args.out else None, ew)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0 if report.success else 1


def _problems(folder: Path, reference: hd.DomainModel) -> dict[str, hd.Problem]:
    problems = {}
    for f in sorted(folder.glob("*.pddl")):
        try:
            problems[f.stem] = hd.parse_problem(f.read_text(), reference)
        except hd.PDDLSyntaxError:
            logging.debug("Skipping '%s', not a problem file", f)
    return problems


def cmd_ew(args) -> int:
    learned = hd.parse_domain(Path(args.learned).read_text())
    reference = hd.parse_domain(Path(args.reference).read_text())
    problems = _problems(Path(args.tasks), reference)
    if not problems:
        logging.error("No problem files in '%s'", args.tasks)
        return 2
    scores = []
    reports = []
    for repeat in range(args.repeats):
        cfg = hd.EWConfig(walks=args.walks, max_len=args.max_len, seed=args.seed + repeat)
        report = hd.ew_score(learned, reference, problems, cfg)
        scores.append(report.aggregate)
        reports.append(report.to_dict())
    print(json.dumps({"mean": float(np.mean(scores)), "runs": reports}, indent=2, sort_keys=True))
    return 0


def cmd_validate(args) -> int:
    domain = hd.parse_domain(Path(args.domain).read_text())
    problem = hd.parse_problem(Path(args.problem).read_text(), domain)
    plan = hd.parse_plan(Path(args.plan).read_text())
    trace = hd.validate_plan(domain, problem, plan)
    print(trace.describe())
    return 0 if trace.valid else 1


def cmd_classify_optimize(args) -> int:
    registry = hd.ClassifierRegistry.load(Path(args.registry))
    samples = hd.TransitionDataset.load(Path(args.dataset)).samples()
    if not samples:
        logging.error("Dataset '%s' holds no labeled states", args.dataset)
        return 1
    atoms_of: dict[str, list[hd.GroundAtom]] = {}
    for _, labels in samples:
        for atom in labels:
            atoms_of.setdefault(atom.predicate, [])
            if atom not in atoms_of[atom.predicate]:
                atoms_of[atom.predicate].append(atom)
    config = hd.LearnerConfig(search_samples=args.samples, seed=args.seed, bound_factor=args.bound_factor)
    rounds = hd.refine_all(registry, samples, atoms_of, config)
    for r in rounds:
        print(f"{r.predicate:24s} {r.decision.value:16s} F1min={r.f_min:.3f} F1avg={r.f_avg:.3f} {r.action}")
    registry.save(Path(args.out) if args.out else Path(args.registry))
    return 0


def cmd_replay(args) -> int:
    transcript = Path(args.transcript)
    if args.manifest:
        manifest = hd.Manifest.load(Path(args.manifest))
        report, _ = hd.run_learning(manifest, hd.ReplayOracle(transcript))
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
        return 0 if report.success else 1
    for record in hd.read_jsonl(transcript):
        print(f"{record['seq']:4d} {record['role']:16s} {record['digest'][:12]} {record['chars_in']:7d} {record['chars_out']:7d}")
    return 0


def main() -> None:
    parser = argparse.ArgumentParser(description="Learn hierarchical planning domains from skills, an oracle and environment feedback.")
    parser.add_argument("--verbose", action="store_true", help="Show every verification step")
    parser.add_argument("--debug", action="store_true", help="Show debug messages")
    commands = parser.add_subparsers(dest="command", required=True)

    learn = commands.add_parser("learn", help="Learn a domain hierarchy for the tasks of a manifest")
    learn.add_argument("manifest", help="Manifest JSON file")
    learn.add_argument("--oracle", choices=[hd.ReplayOracle.shortname(), hd.ScriptedOracle.shortname(), hd.LiveOracle.shortname()],
        default=hd.ScriptedOracle.shortname(), help="Oracle backend")
    learn.add_argument("--transcript", help="Transcript to replay (with --oracle replay)")
    learn.add_argument("--record", help="Append every oracle exchange to this transcript")
    learn.add_argument("--budget-interactions", type=int, help="Skill executions per task (overrides the manifest)")
    learn.add_argument("--budget-replans", type=int, help="Replanning iterations per task (overrides the manifest)")
    learn.add_argument("--seed", type=int, default=0, help="Seed for hyperparameter search and walk sampling")
    learn.add_argument("--max-depth", type=int, default=hd.LearnerConfig.max_depth, help="Deepest decomposition level")
    learn.add_argument("--out", help="Directory for the learned hierarchy, audit trail, dataset and report")
    learn.add_argument("--ew", action="store_true", help="Score the learned domain against the hidden one")
    learn.add_argument("--walks", type=int, default=500, help="Walks per direction for --ew")
    learn.set_defaults(func=cmd_learn)

    ew = commands.add_parser("ew", help="Exploration-walk agreement of two domains")
    ew.add_argument("learned", help="Learned domain file")
    ew.add_argument("reference", help="Reference domain file")
    ew.add_argument("--tasks", required=True, help="Directory with the task problem files")
    ew.add_argument("--walks", type=int, default=500, help="Walks per direction and task")
    ew.add_argument("--max-len", type=int, help="Walk length (default: reference solution length + 2)")
    ew.add_argument("--seed", type=int, default=0, help="Seed of the first repeat")
    ew.add_argument("--repeats", type=int, default=1, help="Average over this many seeds")
    ew.set_defaults(func=cmd_ew)

    validate = commands.add_parser("validate", help="Check a plan against a domain and problem")
    validate.add_argument("domain")
    validate.add_argument("problem")
    validate.add_argument("plan")
    validate.set_defaults(func=cmd_validate)

    classify = commands.add_parser("classify", help="Classifier tools")
    classify_commands = classify.add_subparsers(dest="classify_command", required=True)
    optimize = classify_commands.add_parser("optimize", help="Refine classifier hyperparameters on a labeled dataset")
    optimize.add_argument("registry", help="Classifier directory")
    optimize.add_argument("dataset", help="Transition dataset (JSON lines)")
    optimize.add_argument("--out", help="Write the refined registry here instead of in place")
    optimize.add_argument("--samples", type=int, default=200, help="Random search samples")
    optimize.add_argument("--seed", type=int, default=0)
    optimize.add_argument("--bound-factor", type=float, default=100.0, help="Search range factor around each default")
    optimize.set_defaults(func=cmd_classify_optimize)

    replay = commands.add_parser("replay", help="List a transcript, or rerun a manifest from it")
    replay.add_argument("transcript")
    replay.add_argument("--manifest", help="Rerun learning for this manifest offline")
    replay.set_defaults(func=cmd_replay)

    args = parser.parse_args()

    logging.basicConfig(
        level=logging.DEBUG if args.debug else logging.INFO,
        stream=sys.stderr,
        format="%(levelname)s: %(asctime)s -- %(message)s",
    )
    if not args.verbose and not args.debug:
        logging.getLogger("hierdomain.verification").setLevel(logging.WARNING)

    result = 0
    try:
        result = args.func(args)
    except (hd.ManifestError, ValueError) as exc:
        logging.error("%s", exc)
        result = 2
    except KeyboardInterrupt:
        logging.info("INTERRUPTED")
        result = 10
    except Exception as exc:
        logging.error("Exception: %s", exc)
        result = 99
    sys.exit(result)


if __name__ == "__main__":
    main()
