"""Command-line pipeline: ingest, glove, classify, gan, generate, sweep.

Every option can also come from a JSON file given with ``--config``; keys are
the option names with dashes or underscores.  Flags on the command line win
over the file, which wins over the built-in defaults.  ``DMK_SEED`` supplies
the seed when neither sets one.

Exit codes: 0 success, 1 runtime failure, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys
import tempfile

from . import __version__
from .classifier import METRICS_HEADER, ClassifierConfig, train_classifier
from .corpus import (
    FIELDS,
    build_vocabulary,
    generate_synthetic_corpus,
    parse_listings,
    read_labeled_csv,
    stratify,
    tokenize,
    train_test_split,
    write_labeled_csv,
    write_listings_csv,
)
from .gan import (
    GanConfig,
    Generator,
    decode_sequence,
    format_sweep_table,
    gamma_sweep,
    generate,
    keyword_vectors,
    train_gan,
    write_step_log,
)
from .glove import EmbeddingTable, ScalingParams, build_cooccurrence, fit_minmax, train_glove
from .nn import assign, load_checkpoint, save_checkpoint

log = logging.getLogger("dmkgan")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
DEFAULT_GAMMAS = "0.0002,0.00045,0.0007"


class InputError(Exception):
    """Bad input files or option values; maps to exit code 2."""


# -- output helpers ----------------------------------------------------------

class Outputs:
    """Collects output files in memory and writes them only once a command succeeds."""

    def __init__(self):
        self.files = {}

    def text(self, path, content):
        self.files[path] = content

    def checkpoint(self, path, params):
        # save_checkpoint writes to a path; route it through a temp file
        fd, tmp = tempfile.mkstemp(suffix=".json")
        os.close(fd)
        try:
            save_checkpoint(tmp, params)
            with open(tmp) as fh:
                self.files[path] = fh.read()
        finally:
            os.unlink(tmp)

    def commit(self):
        for path, content in self.files.items():
            _atomic_write(path, content)


def _atomic_write(path, content):
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_text(path, what):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {what} {path!r}: {exc.strerror or exc}") from None
    except UnicodeDecodeError:
        raise InputError(f"{what} {path!r} is not UTF-8 text") from None


def _load_table(path):
    try:
        return EmbeddingTable.load(io.StringIO(_read_text(path, "embedding file")))
    except ValueError as exc:
        raise InputError(f"embedding file {path!r}: {exc}") from None


def _load_scaling(path):
    try:
        return ScalingParams.from_json(_read_text(path, "scaling file"))
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"scaling file {path!r} is malformed: {exc}") from None


def _load_labeled(path):
    try:
        return read_labeled_csv(_read_text(path, "labeled CSV"))
    except (ValueError, KeyError) as exc:
        raise InputError(f"labeled CSV {path!r}: {exc}") from None


def _csv_list(text, conv, what):
    try:
        return [conv(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise InputError(f"--{what} must be a comma-separated list, got {text!r}") from None


def _check(cond, message):
    if not cond:
        raise InputError(message)


# -- commands ----------------------------------------------------------------

def cmd_ingest(args, out):
    _check(args.bin_width > 0, "--bin-width must be positive")
    if args.synthetic:
        _check(args.synthetic >= 3, "--synthetic needs at least 3 records")
        records = generate_synthetic_corpus(n=args.synthetic, seed=args.seed)
        buf = io.StringIO()
        write_listings_csv(records, buf)
        text = buf.getvalue()
        if args.input:
            out.text(args.input, text)
    else:
        _check(args.input, "--input is required unless --synthetic is given")
        text = _read_text(args.input, "input CSV")
    try:
        records, report = parse_listings(text)
        dataset = stratify(records, args.bin_width)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    buf = io.StringIO()
    write_labeled_csv(dataset, buf)
    out.text(args.output, buf.getvalue())
    out.text(args.report, report.to_json())
    log.info("ingested %d rows, rejected %d", report.rows_read, report.rows_rejected)


def cmd_glove(args, out):
    _check(args.dim >= 1, "--dim must be at least 1")
    _check(args.window >= 1, "--window must be at least 1")
    _check(args.min_count >= 1, "--min-count must be at least 1")
    _check(args.epochs >= 0, "--epochs must be non-negative")
    _check(args.lr > 0, "--lr must be positive")
    try:
        records, _ = parse_listings(_read_text(args.input, "corpus CSV"))
    except ValueError as exc:
        raise InputError(str(exc)) from None
    seqs = [tokenize(r.description) for r in records]
    vocab = build_vocabulary(seqs, args.min_count)
    _check(vocab.tokens, f"empty vocabulary: no token occurs at least {args.min_count} times")
    matrix = build_cooccurrence(seqs, vocab, args.window)
    _check(len(matrix), "no co-occurrences within the window")
    table = train_glove(matrix, vocab, d=args.dim, epochs=args.epochs, lr=args.lr, seed=args.seed)
    buf = io.StringIO()
    table.save(buf)
    # fit scaling on the table as written so later loads agree bit for bit
    written = EmbeddingTable.load(io.StringIO(buf.getvalue()))
    try:
        scaling = fit_minmax(written)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out.text(args.output, buf.getvalue())
    out.text(args.scaling, scaling.to_json())


def cmd_classify(args, out):
    _check(0.0 < args.ratio < 1.0, "--ratio must lie strictly between 0 and 1")
    _check(args.lr > 0, "--lr must be positive")
    try:
        config = ClassifierConfig(hidden=args.hidden, max_len=args.max_len, ensemble=args.ensemble == "on",
                                  epochs=args.epochs, lr=args.lr, seed=args.seed, init_scale=args.init_scale,
                                  relu_recurrent=args.relu == "recurrent", vote=args.vote)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    pairs = _load_labeled(args.input)
    table = _load_table(args.embeddings)
    config.dim = table.dim
    try:
        split = train_test_split(pairs, args.ratio, args.seed)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    model, metrics = train_classifier(split, table, config)
    out.text(args.metrics, "\n".join([METRICS_HEADER] + [m.csv_row() for m in metrics]) + "\n")
    out.checkpoint(args.checkpoint, model.parameters())


def _gan_config(args, dim):
    try:
        return GanConfig(gamma=getattr(args, "gamma", 0.0), seq_len=args.seq_len, dim=dim, noise_dim=args.noise_dim,
                         gen_hidden=args.gen_hidden, disc_hidden=args.disc_hidden, disc_steps=args.disc_steps,
                         gen_steps=args.gen_steps, cycles=args.cycles, lr=args.lr, seed=args.seed,
                         paper_literal_generator=args.paper_literal_generator, delta_space=args.delta_space,
                         high_only=not args.all_labels)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _gan_inputs(args):
    _check(args.lr > 0, "--lr must be positive")
    _gan_config(args, 1)  # range checks before any file is read
    keywords = _csv_list(args.keywords, str.strip, "keywords")
    pairs = _load_labeled(args.input)
    table = _load_table(args.embeddings)
    scaling = _load_scaling(args.scaling)
    _check(len(scaling.min) == table.dim, "scaling file does not match the embedding dimension")
    try:
        keyword_vectors(keywords, table)
    except KeyError as exc:
        raise InputError(exc.args[0]) from None
    return _gan_config(args, table.dim), pairs, table, scaling, keywords


def cmd_gan(args, out):
    config, pairs, table, scaling, keywords = _gan_inputs(args)
    _check(config.gamma == 0 or keywords, "--keywords is required when --gamma > 0")
    try:
        result = train_gan(config, pairs, table, scaling, keywords)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    buf = io.StringIO()
    write_step_log(result.steps, buf)
    out.text(args.step_log, buf.getvalue())
    out.checkpoint(args.checkpoint, result.parameters())


def cmd_generate(args, out):
    _check(args.samples >= 0, "--samples must be non-negative")
    try:
        arrays = load_checkpoint(args.checkpoint)
    except OSError as exc:
        raise InputError(f"cannot read checkpoint {args.checkpoint!r}: {exc.strerror or exc}") from None
    except ValueError as exc:
        raise InputError(f"checkpoint {args.checkpoint!r}: {exc}") from None
    table = _load_table(args.embeddings)
    scaling = _load_scaling(args.scaling)
    try:
        W1, W2, W3 = arrays["gen.l1.W"], arrays["gen.l2.W"], arrays["gen.l3.W"]
    except KeyError as exc:
        raise InputError(f"checkpoint has no generator entry {exc.args[0]!r}") from None
    _check(W3.shape[0] % table.dim == 0, "generator output size is not a multiple of the embedding dimension")
    config = GanConfig(seq_len=W3.shape[0] // table.dim, dim=table.dim, noise_dim=W1.shape[1],
                       gen_hidden=W1.shape[0], paper_literal_generator=args.paper_literal_generator)
    _check(W2.shape == (config.gen_hidden, config.gen_hidden), "generator hidden layers disagree in size")
    gen = Generator(config)
    try:
        assign(gen.parameters(), arrays)
    except (KeyError, ValueError) as exc:
        raise InputError(f"checkpoint does not fit the generator: {exc}") from None
    lines = [" ".join(decode_sequence(g, table, scaling)) for g in generate(gen, config, args.samples, args.seed)]
    text = "".join(line + "\n" for line in lines)
    if args.output:
        out.text(args.output, text)
    else:
        out.stdout = text


def cmd_sweep(args, out):
    _check(args.samples >= 1, "--samples must be at least 1")
    _check(args.workers >= 1, "--workers must be at least 1")
    gammas = _csv_list(args.gammas, float, "gammas")
    seeds = _csv_list(args.seeds, int, "seeds")
    _check(gammas, "--gammas is empty")
    _check(seeds, "--seeds is empty")
    _check(gammas == sorted(gammas), "--gammas must be sorted ascending")
    _check(all(g >= 0 for g in gammas), "--gammas must be non-negative")
    config, pairs, table, scaling, keywords = _gan_inputs(args)
    _check(keywords, "--keywords is required for a sweep")
    report = gamma_sweep(gammas, seeds, config, pairs, table, scaling, keywords, args.samples, args.workers)
    out.text(args.report, json.dumps(report, indent=2) + "\n")
    if args.table:
        out.text(args.table, format_sweep_table(report, keywords))


# -- argument parsing --------------------------------------------------------

def _seed_default():
    env = os.environ.get("DMK_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise InputError(f"DMK_SEED must be an integer, got {env!r}") from None


def _add_common(p):
    p.add_argument("--config", help="JSON file of option values (flags override it)")
    p.add_argument("--seed", type=int, default=None, help="random seed (default: $DMK_SEED, else 0)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")


def _add_gan_options(p):
    p.add_argument("--input", required=True, help="labeled CSV from ingest")
    p.add_argument("--embeddings", required=True, help="embedding text file")
    p.add_argument("--scaling", required=True, help="scaling JSON from glove")
    p.add_argument("--keywords", default="", help="comma-separated keywords (required when gamma > 0)")
    p.add_argument("--seq-len", type=int, default=12, help="generated tokens T")
    p.add_argument("--noise-dim", type=int, default=64, help="generator noise size")
    p.add_argument("--gen-hidden", type=int, default=128, help="generator hidden width")
    p.add_argument("--disc-hidden", type=int, default=128, help="discriminator hidden width")
    p.add_argument("--disc-steps", type=int, default=2000, help="discriminator steps per cycle")
    p.add_argument("--gen-steps", type=int, default=50, help="generator steps per cycle")
    p.add_argument("--cycles", type=int, default=1, help="training cycles")
    p.add_argument("--lr", type=float, default=1e-3, help="Adam learning rate for both networks")
    p.add_argument("--delta-space", choices=("scaled", "raw"), default="scaled",
                   help="embedding space of the keyword vectors in the attention term")
    p.add_argument("--all-labels", action="store_true", help="learn from every listing, not only High ones")
    p.add_argument("--paper-literal-generator", action="store_true",
                   help="clamp the generator output to [0, 1] instead of a final sigmoid")


def build_parser():
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="dmkgan", description="Listing text classification and generation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", formatter_class=fmt, help="parse listings and label popularity terciles")
    p.add_argument("--input", help="listing CSV with columns " + ",".join(FIELDS))
    p.add_argument("--output", required=True, help="labeled CSV to write")
    p.add_argument("--report", required=True, help="parse report JSON to write")
    p.add_argument("--bin-width", type=float, default=30.0, help="price-per-bedroom bin width")
    p.add_argument("--synthetic", type=int, default=0,
                   help="generate this many synthetic listings instead of reading --input "
                        "(written to --input when given)")
    _add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("glove", formatter_class=fmt, help="train GloVe embeddings and fit min-max scaling")
    p.add_argument("--input", required=True, help="raw or labeled listing CSV")
    p.add_argument("--output", required=True, help="embedding text file to write")
    p.add_argument("--scaling", required=True, help="scaling JSON to write")
    p.add_argument("--dim", type=int, default=50, help="embedding dimension")
    p.add_argument("--window", type=int, default=5, help="co-occurrence window")
    p.add_argument("--min-count", type=int, default=2, help="minimum token count")
    p.add_argument("--epochs", type=int, default=200, help="AdaGrad epochs")
    p.add_argument("--lr", type=float, default=0.05, help="AdaGrad learning rate")
    _add_common(p)
    p.set_defaults(func=cmd_glove)

    p = sub.add_parser("classify", formatter_class=fmt, help="train the LSTM popularity classifier")
    p.add_argument("--input", required=True, help="labeled CSV from ingest")
    p.add_argument("--embeddings", required=True, help="trained or external embedding file")
    p.add_argument("--metrics", required=True, help="per-epoch metrics CSV to write")
    p.add_argument("--checkpoint", required=True, help="model checkpoint JSON to write")
    p.add_argument("--ensemble", choices=("on", "off"), default="on", help="combine per-step predictions")
    p.add_argument("--vote", choices=("mean", "majority"), default="mean", help="ensembling rule")
    p.add_argument("--epochs", type=int, default=10, help="training epochs")
    p.add_argument("--hidden", type=int, default=16, help="LSTM units")
    p.add_argument("--max-len", type=int, default=50, help="tokens read per description")
    p.add_argument("--lr", type=float, default=5e-3, help="Adam learning rate")
    p.add_argument("--init-scale", type=float, default=0.01, help="uniform init half-width")
    p.add_argument("--ratio", type=float, default=0.7, help="training fraction")
    p.add_argument("--relu", choices=("recurrent", "output"), default="recurrent",
                   help="apply ReLU to the recurrent state or only before the output layer")
    _add_common(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("gan", formatter_class=fmt, help="train the generator and discriminator")
    _add_gan_options(p)
    p.add_argument("--gamma", type=float, default=0.00045, help="keyword attention weight (0 gives plain BCE)")
    p.add_argument("--checkpoint", required=True, help="checkpoint JSON to write")
    p.add_argument("--step-log", required=True, help="per-step loss CSV to write")
    _add_common(p)
    p.set_defaults(func=cmd_gan)

    p = sub.add_parser("generate", formatter_class=fmt, help="decode samples from a trained generator")
    p.add_argument("--checkpoint", required=True, help="checkpoint JSON from gan")
    p.add_argument("--embeddings", required=True, help="embedding text file")
    p.add_argument("--scaling", required=True, help="scaling JSON from glove")
    p.add_argument("--samples", type=int, default=20, help="number of sequences")
    p.add_argument("--output", help="write samples here instead of standard output")
    p.add_argument("--paper-literal-generator", action="store_true",
                   help="the checkpoint was trained with a clamped output layer")
    _add_common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("sweep", formatter_class=fmt, help="train one GAN per (gamma, seed) and count keywords")
    _add_gan_options(p)
    p.add_argument("--gammas", default=DEFAULT_GAMMAS, help="ascending comma-separated gamma values")
    p.add_argument("--seeds", default="0,1,2,3,4", help="comma-separated seeds")
    p.add_argument("--samples", type=int, default=20, help="decoded samples per run")
    p.add_argument("--workers", type=int, default=1, help="parallel processes")
    p.add_argument("--report", required=True, help="JSON report to write")
    p.add_argument("--table", help="plain-text summary table to write")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def _subparsers(parser):
    return next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices


def _apply_config(parser, argv):
    """Parse ``argv`` with values from ``--config`` as the defaults."""
    if "-h" in argv or "--help" in argv:
        return parser.parse_args(argv)
    required = [a for sub in _subparsers(parser).values() for a in sub._actions if a.required]
    for action in required:
        action.required = False
    try:
        args = parser.parse_args(argv)
    finally:
        for action in required:
            action.required = True
    values = {}
    sub = _subparsers(parser)[args.command]
    if args.config:
        try:
            blob = json.loads(_read_text(args.config, "config file"))
        except json.JSONDecodeError as exc:
            raise InputError(f"config file {args.config!r} is not valid JSON: {exc}") from None
        _check(isinstance(blob, dict), "config file must hold a JSON object")
        known = {a.dest for a in sub._actions} - {"help", "config", "func"}
        for key, value in blob.items():
            dest = key.replace("-", "_")
            _check(dest in known, f"config key {key!r} is not an option of '{args.command}'")
            values[dest] = value
        sub.set_defaults(**values)
    # required options may come from the file
    for action in sub._actions:
        if action.dest in values:
            action.required = False
    return parser.parse_args(argv)


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(parser, argv)
        if args.seed is None:
            args.seed = _seed_default()
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        out = Outputs()
        out.stdout = ""
        args.func(args, out)
        out.commit()
        sys.stdout.write(out.stdout)
        sys.stdout.flush()
        return EXIT_OK
    except InputError as exc:
        print(f"dmkgan: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        log.debug("command failed", exc_info=True)
        print(f"dmkgan: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
