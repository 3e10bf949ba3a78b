import argparse
import sys

from .export import ExportError, export


def main(argv=None):
    p = argparse.ArgumentParser(
        prog="bnnexport",
        description="Convert a Keras-style binarized model to verifier JSON",
    )
    p.add_argument("model", help="saved model (.keras)")
    p.add_argument("out", help="network JSON output path")
    p.add_argument("--check-samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    try:
        manifest = export(
            args.model, args.out, check_samples=args.check_samples, seed=args.seed
        )
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        sys.exit(1)
    print(
        f"wrote {manifest.output}: {len(manifest.layer_map)} source layers, "
        f"max |diff| {manifest.agreement['max_abs_diff']:.2e} over "
        f"{manifest.agreement['samples']} samples",
        file=sys.stderr,
    )


if __name__ == "__main__":
    main()
