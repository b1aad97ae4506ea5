"""`plom gen`: write a synthetic dataset"""

import argparse

from pydantic import ValidationError

from plom.demo.generator import PRESETS, generate, generate_raw, preset
from plom.exceptions import EXIT_OK, InputError
from plom.models import GeneratorKind, GeneratorSpec
from plom.services.data_model import validate_normalization
from plom.storage import write_matrix


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("gen", help="Write a synthetic dataset")
    parser.add_argument("out", help="Output file (.csv or .bin)")
    parser.add_argument("--preset", choices=sorted(PRESETS), help="Named dataset")
    parser.add_argument("--kind", choices=[kind.value for kind in GeneratorKind], help="Generator kind")
    parser.add_argument("--nu", type=int)
    parser.add_argument("--n-d", type=int)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--noise", type=float)
    parser.add_argument("--raw", action="store_true", help="Write the samples before whitening")
    parser.add_argument("--format", choices=["auto", "csv", "bin"], default="auto")
    parser.set_defaults(handler=handle)


def build_spec(args: argparse.Namespace) -> GeneratorSpec:
    base = preset(args.preset) if args.preset else GeneratorSpec()
    updates = {"kind": args.kind, "nu": args.nu, "n_d": args.n_d, "seed": args.seed, "noise": args.noise}
    values = {**base.model_dump(), **{key: value for key, value in updates.items() if value is not None}}
    try:
        return GeneratorSpec(**values)
    except ValidationError as e:
        raise InputError(f"Invalid generator settings: {e.errors()[0]['msg']}") from e


def handle(args: argparse.Namespace) -> int:
    spec = build_spec(args)
    if args.raw:
        matrix = generate_raw(spec)
    else:
        ts = generate(spec)
        diagnostics = validate_normalization(ts)
        matrix = ts.eta
        print(f"|mean|={diagnostics.mean_norm:.3e} |C-I|_F={diagnostics.cov_dev:.3e}")
    header = [f"x{j + 1}" for j in range(matrix.shape[1])] if args.format != "bin" else None
    path = write_matrix(args.out, matrix, args.format, header=header)
    print(f"Wrote {spec.kind.value} dataset nu={spec.nu} n_d={spec.n_d} to {path}")
    return EXIT_OK
