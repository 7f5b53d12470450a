import argparse
import logging
import sys
from typing import List, Optional

from asrc import bootstrap, config, views
from asrc.adapters.matrix_io import FORMATS, DimensionError, ParseError
from asrc.domain import commands
from asrc.domain.model import VARIANTS, ConfigError
from asrc.domain.numerics import NumericalError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asrc",
        description="Adaptive sparse graph learning with robust clustering.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="action", required=True)

    run = sub.add_parser("run", help="cluster a data matrix")
    run.add_argument("--data", required=True)
    run.add_argument("--labels")
    run.add_argument("--config", help="key=value file; defaults if omitted")
    run.add_argument("--variant", choices=VARIANTS)
    run.add_argument("--seed", type=int)
    run.add_argument("--n-clusters", type=int, dest="n_clusters")
    run.add_argument("--out")
    run.add_argument("--format", choices=FORMATS, default="csv", dest="fmt")
    run.add_argument("--header", action="store_true")
    run.add_argument(
        "--timings",
        action="store_true",
        help="add per-phase wall time to the result document",
    )

    synth = sub.add_parser("synth", help="write a synthetic dataset")
    synth.add_argument("kind", choices=("moons", "blobs"))
    synth.add_argument("--n", type=int, default=300)
    synth.add_argument("--noise", type=float, default=0.05)
    synth.add_argument("--c", type=int, default=4)
    synth.add_argument("--separation", type=float, default=10.0)
    synth.add_argument("--spread", type=float, default=1.0)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True)
    synth.add_argument("--labels", required=True)
    synth.add_argument("--format", choices=FORMATS, default="csv", dest="fmt")

    evaluate = sub.add_parser("eval", help="score predicted labels")
    evaluate.add_argument(
        "--pred", required=True, help="labels file or a result document (.json)"
    )
    evaluate.add_argument("--labels", required=True)

    sweep = sub.add_parser("sweep", help="rerun a variant over a parameter grid")
    sweep.add_argument("--data", required=True)
    sweep.add_argument("--labels", required=True)
    sweep.add_argument("--config", help="key=value file; defaults if omitted")
    sweep.add_argument("--variant", choices=VARIANTS)
    sweep.add_argument("--seed", type=int)
    sweep.add_argument(
        "--grid",
        action="append",
        required=True,
        metavar="KEY=V1,V2",
        help="values to try for one setting; repeat for a cartesian grid",
    )
    sweep.add_argument("--out", help="write the sweep table as JSON")
    sweep.add_argument("--format", choices=FORMATS, default="csv", dest="fmt")
    sweep.add_argument("--header", action="store_true")

    sub.add_parser("history", help="list runs stored in ASRC_DB_URI")
    return parser


def _command(args: argparse.Namespace) -> commands.Command:
    if args.action == "run":
        return commands.RunClustering(
            data_path=args.data,
            config_path=args.config,
            labels_path=args.labels,
            variant=args.variant,
            seed=args.seed,
            out_path=args.out,
            fmt=args.fmt,
            header=args.header,
            n_clusters=args.n_clusters,
            timings=args.timings,
        )
    if args.action == "synth":
        return commands.Synthesize(
            kind=args.kind,
            n=args.n,
            out_path=args.out,
            labels_path=args.labels,
            noise=args.noise,
            c=args.c,
            separation=args.separation,
            spread=args.spread,
            seed=args.seed,
            fmt=args.fmt,
        )
    if args.action == "sweep":
        return commands.Sweep(
            data_path=args.data,
            labels_path=args.labels,
            grid=config.parse_grid(args.grid),
            config_path=args.config,
            variant=args.variant,
            seed=args.seed,
            out_path=args.out,
            fmt=args.fmt,
            header=args.header,
        )
    return commands.Evaluate(pred_path=args.pred, labels_path=args.labels)


def _report(action: str, result) -> None:
    if action == "run":
        line = f"{result.run_id} {result.variant}: {result.n_clusters} clusters"
        if result.ami is not None:
            line += f", AMI {100 * result.ami:.2f}, ARI {100 * result.ari:.2f}"
        print(line)
    elif action == "sweep":
        for point in result:
            settings = " ".join(f"{k}={v}" for k, v in point.settings.items())
            print(
                f"{settings}: {point.n_clusters} clusters, "
                f"AMI {100 * point.ami:.2f}, ARI {100 * point.ari:.2f}"
            )
    elif action == "synth":
        print(f"wrote {result[0]}x{result[1]} matrix")
    else:
        ami, ari = result
        print(f"AMI {100 * ami:.2f}\nARI {100 * ari:.2f}")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        config.get_threads()
        bus = bootstrap.bootstrap()
        if args.action == "history":
            for row in views.runs(bus.uow):
                print(
                    "{run_id} {variant} seed={seed} n={n_samples} "
                    "clusters={n_clusters} ami={ami} ari={ari}".format(**row)
                )
            return EXIT_OK
        [result] = bus.handle(_command(args))
    except ConfigError as e:
        logger.error(f"configuration error: {e}")
        return EXIT_CONFIG
    except NumericalError as e:
        logger.error(f"numerical failure: {type(e).__name__}: {e}")
        return EXIT_NUMERICAL
    except (ParseError, DimensionError, OSError) as e:
        logger.error(f"cannot read input: {e}")
        return EXIT_IO
    except ValueError as e:
        logger.error(f"invalid argument: {e}")
        return EXIT_CONFIG
    _report(args.action, result)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
