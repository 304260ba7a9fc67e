"""Command-line front end for reproducible secrecy experiments.

Every report-producing subcommand writes JSON or flat CSV with the fully
resolved configuration echoed into the header (CSV: ``# key value`` comment
lines, which are themselves valid config-file lines; JSON: a ``config``
object), so a report can always be regenerated from its own header.  The
``workers`` and ``out`` options control scheduling and placement only and
are deliberately left out of the echo: runs that differ only in those
produce byte-identical reports.

Exit codes: 0 success, 2 invalid configuration or input data, 3 enumeration
or state-space cap exceeded, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from .cipher import additive_cipher
from .errors import (
    CertificationError,
    ConvergenceError,
    EnumerationCapError,
    InvalidDistributionError,
    ModelFormatError,
    NotErgodicError,
    RunkeyError,
    StateCapError,
    UnsupportedCipherError,
)
from .inference import posterior
from .secrecy import (
    build_typical_set,
    certify_bounds,
    concentration_experiment,
    robustness_sweep,
    typical_set_growth,
)
from .sources import load_model, make_bernoulli, make_uniform, save_model, train_markov
from .words import bytes_to_symbols, symbols_to_bytes, text_to_word, word_to_text

_CHUNK_BYTES = 1 << 16


class ConfigError(RunkeyError, ValueError):
    """Invalid command line, config file, or input data."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # single-line, machine-parseable failures
        raise ConfigError(message)


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"bad integer list {text!r}") from exc


def _float_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"bad float list {text!r}") from exc


def _load_source(spec_text: str):
    """Resolve a model argument: inline ``uniform:``/``bernoulli:`` or a file path."""
    if spec_text.startswith("uniform:"):
        return make_uniform(int(spec_text.split(":", 1)[1]))
    if spec_text.startswith("bernoulli:"):
        probs = _float_list(spec_text.split(":", 1)[1])
        return make_bernoulli(probs)
    return load_model(spec_text)


# -- configuration echo ---------------------------------------------------------

# per-subcommand echo order as (flag name, parsed attribute) pairs, resolved
# after parsing so defaults are included.  Echoed flag names are the real
# option names, which makes every report header a replayable config file.
# 'workers' and 'out' never appear: they cannot change report contents.
_ECHO_KEYS: dict[str, tuple[tuple[str, str], ...]] = {
    "train": (("corpus", "corpus"), ("bits", "bits"), ("n", "n"),
              ("order", "order"), ("alpha", "alpha")),
    "entropy": (("x-model", "x_model"), ("m", "m_list"), ("format", "format")),
    "encrypt": (("in", "in_path"), ("key", "key"), ("n", "n"),
                ("bits", "bits"), ("text", "text")),
    "decrypt": (("in", "in_path"), ("key", "key"), ("n", "n"),
                ("bits", "bits"), ("text", "text")),
    "posterior": (("x-model", "x_model"), ("y-model", "y_model"), ("z", "z"),
                  ("max-rows", "max_rows"), ("format", "format")),
    "psi": (("x-model", "x_model"), ("y-model", "y_model"), ("z", "z"),
            ("t", "t_list"), ("eps", "eps"), ("m", "m"), ("h-ref", "h_ref"),
            ("member-cap", "member_cap"), ("seed", "seed"),
            ("format", "format")),
    "smb": (("x-model", "x_model"), ("y-model", "y_model"), ("t", "t_list"),
            ("samples", "samples"), ("eps", "eps"), ("delta", "delta"),
            ("m", "m"), ("h-ref", "h_ref"), ("seed", "seed"),
            ("format", "format")),
    "bounds": (("x-model", "x_model"), ("y-model", "y_model"), ("m", "m"),
               ("format", "format")),
    "sweep": (("x-model", "x_model"), ("tau", "tau_list"), ("m", "m"),
              ("t", "t_list"), ("eps", "eps"), ("seed", "seed"),
              ("format", "format")),
}


def _echo_value(value) -> str | None:
    if value is None:
        return None
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_echo_value(v) for v in value)
    return str(value)


@dataclass
class RunConfig:
    """A validated subcommand invocation plus its reproducibility echo."""

    subcommand: str
    args: argparse.Namespace

    def echo(self) -> dict[str, str]:
        out = {"subcommand": self.subcommand}
        for flag, attr in _ECHO_KEYS.get(self.subcommand, ()):
            value = _echo_value(getattr(self.args, attr))
            if value is not None:
                out[flag] = value
        return out


def _read_config_file(path: str) -> list[str]:
    """Turn ``key value`` lines into command-line tokens (flags win later)."""
    tokens: list[str] = []
    try:
        with open(path, encoding="utf-8") as fh:
            for raw in fh:
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split(maxsplit=1)
                key = parts[0]
                if key == "subcommand":
                    continue
                value = parts[1] if len(parts) > 1 else ""
                if value.lower() == "true" or value == "":
                    tokens.append(f"--{key}")
                elif value.lower() == "false":
                    continue
                else:
                    tokens.extend([f"--{key}", value])
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
    return tokens


# -- report writers --------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if value != value:
            return "nan"
        if value == float("inf"):
            return "inf"
        if value == float("-inf"):
            return "-inf"
        return f"{value:.12g}"
    return str(value)


def _json_value(value) -> str:
    import json as _json

    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if value != value or value in (float("inf"), float("-inf")):
            return _json.dumps(_fmt(value))  # JSON has no inf/nan literals
        return f"{value:.12g}"
    if isinstance(value, str):
        return _json.dumps(value)
    if isinstance(value, dict):
        inner = ", ".join(
            f"{_json.dumps(str(k))}: {_json_value(v)}" for k, v in value.items()
        )
        return "{" + inner + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_json_value(v) for v in value) + "]"
    raise TypeError(f"cannot serialise {type(value)!r}")


def _write_json(fh, config: dict[str, str], results) -> None:
    fh.write(_json_value({"config": config, "results": results}))
    fh.write("\n")


def _write_csv(fh, config: dict[str, str], columns: tuple[str, ...], rows) -> None:
    for key, value in config.items():
        fh.write(f"# {key} {value}\n")
    fh.write(",".join(columns) + "\n")
    for row in rows:
        fh.write(",".join(_fmt(v) for v in row) + "\n")


class _open_out:
    """Open an output path for text, '-' or None meaning stdout."""

    def __init__(self, path):
        self._path = path
        self._fh = None

    def __enter__(self):
        if self._path in (None, "-"):
            return sys.stdout
        self._fh = open(self._path, "w", encoding="utf-8", newline="")
        return self._fh

    def __exit__(self, *exc):
        if self._fh is not None:
            self._fh.close()
        return False


def _series_rows(results_rows, first_column: str):
    """Flatten [{first: v, metric: value, ...}] into (first, metric, value) rows."""
    flat = []
    for row in results_rows:
        lead = row[first_column]
        for key, value in row.items():
            if key == first_column:
                continue
            flat.append((lead, key, value))
    return flat


# -- byte/symbol IO for encrypt/decrypt ------------------------------------------


def _read_exact(fh, size: int) -> bytes:
    buf = fh.read(size)
    while buf and len(buf) < size:
        more = fh.read(size - len(buf))
        if not more:
            break
        buf += more
    return buf


def _open_binary(path, mode: str):
    if path == "-":
        return (sys.stdin.buffer if "r" in mode else sys.stdout.buffer), False
    return open(path, mode), True


def _run_cipher_pass(args, direction: str) -> int:
    n = 2 if args.bits else args.n
    spec = additive_cipher(n)
    apply_word = spec.encrypt if direction == "encrypt" else spec.decrypt
    if args.text:
        with open(args.in_path, encoding="utf-8") as fh:
            data = text_to_word(fh.read(), n)
        with open(args.key, encoding="utf-8") as fh:
            key = text_to_word(fh.read(), n)
        result = apply_word(data, key)
        with _open_out(args.out) as fh:
            fh.write(word_to_text(result, n) + "\n")
        return 0
    in_fh, close_in = _open_binary(args.in_path, "rb")
    key_fh, close_key = _open_binary(args.key, "rb")
    out_fh, close_out = _open_binary(args.out or "-", "wb")
    try:
        while True:
            block = _read_exact(in_fh, _CHUNK_BYTES)
            key_block = _read_exact(key_fh, len(block) or _CHUNK_BYTES)
            if not block and not key_block:
                break
            if len(block) != len(key_block):
                raise ConfigError("plaintext and key streams differ in length")
            x = bytes_to_symbols(block, n, bits=args.bits)
            y = bytes_to_symbols(key_block, n, bits=args.bits)
            out_fh.write(symbols_to_bytes(apply_word(x, y), n, bits=args.bits))
    finally:
        for fh, owned in ((in_fh, close_in), (key_fh, close_key), (out_fh, close_out)):
            if owned:
                fh.close()
    return 0


# -- subcommands -----------------------------------------------------------------


def _cmd_train(config: RunConfig) -> int:
    args = config.args
    n = 2 if args.bits else args.n
    if args.corpus == "-":
        raw = sys.stdin.buffer.read()
    else:
        with open(args.corpus, "rb") as fh:
            raw = fh.read()
    stream = bytes_to_symbols(raw, n, bits=args.bits)
    model = train_markov(stream, n, args.order, alpha=args.alpha)
    header = [f"{k} {v}" for k, v in config.echo().items()]
    save_model(model, args.out, header_lines=header)
    print(
        f"trained order-{args.order} model on {stream.size} symbols: "
        f"entropy rate {model.entropy_rate():.12g} bits/symbol -> {args.out}"
    )
    return 0


def _cmd_entropy(config: RunConfig) -> int:
    args = config.args
    model = _load_source(args.x_model)
    rows = [
        {"m": "", "metric": "entropy_rate", "value": model.entropy_rate()},
        {"m": "", "metric": "redundancy", "value": model.redundancy()},
    ]
    results = {
        "n": model.alphabet_size,
        "order": model.order,
        "entropy_rate": model.entropy_rate(),
        "redundancy": model.redundancy(),
    }
    if args.m_list:
        blocks = []
        for m in args.m_list:
            value = model.block_entropy(m)
            blocks.append({"m": m, "h_m": value})
            rows.append({"m": m, "metric": "block_entropy", "value": value})
        results["block_entropies"] = blocks
    print(f"entropy rate: {model.entropy_rate():.12g} bits/symbol")
    with _open_out(args.out) as fh:
        if args.format == "json":
            _write_json(fh, config.echo(), results)
        else:
            _write_csv(fh, config.echo(), ("m", "metric", "value"),
                       [(r["m"], r["metric"], r["value"]) for r in rows])
    return 0


def _cmd_posterior(config: RunConfig) -> int:
    args = config.args
    xm = _load_source(args.x_model)
    ym = _load_source(args.y_model)
    spec = additive_cipher(xm.alphabet_size)
    z = text_to_word(args.z, spec.alphabet_size)
    table = posterior(xm, ym, spec, z, workers=args.workers)
    print(
        f"log2 P(z) = {table.log_marginal:.12g} over "
        f"{table.log_posterior.size} plaintexts"
    )
    with _open_out(args.out) as fh:
        if args.format == "json":
            results = {
                "t": table.length,
                "log2_marginal": table.log_marginal,
                "rows": [
                    {
                        "plaintext": word_to_text(
                            np.array(_unpack(u, spec.alphabet_size, table.length)),
                            spec.alphabet_size,
                        ),
                        "log2_posterior": float(lp),
                    }
                    for u, lp in enumerate(table.log_posterior)
                ]
                if table.log_posterior.size <= args.max_rows
                else None,
            }
            _write_json(fh, config.echo(), results)
        else:
            for key, value in config.echo().items():
                fh.write(f"# {key} {value}\n")
            table.to_csv(fh)
    return 0


def _unpack(index: int, n: int, length: int) -> list[int]:
    out = [0] * length
    for pos in range(length - 1, -1, -1):
        index, out[pos] = divmod(index, n)
    return out


def _cmd_psi(config: RunConfig) -> int:
    args = config.args
    xm = _load_source(args.x_model)
    ym = _load_source(args.y_model)
    spec = additive_cipher(xm.alphabet_size)
    if args.z is None and not args.t_list:
        raise ConfigError("psi needs either --z or --t")
    if args.z is not None:
        z = text_to_word(args.z, spec.alphabet_size)
        built = build_typical_set(
            xm, ym, spec, z, args.eps, args.h_ref,
            bracket_order=args.m, member_cap=args.member_cap,
            workers=args.workers,
        )
        results = built.as_dict()
        rows = [(built.length, k, v) for k, v in results.items() if k != "t"]
        print(
            f"typical set at t={built.length}: {built.member_count} members, "
            f"mass {built.mass:.6g}, growth {built.growth:.6g}"
        )
    else:
        if args.seed is None:
            raise ConfigError("sampling ciphertexts for --t needs --seed")
        points = typical_set_growth(
            xm, ym, spec, args.t_list, args.eps, args.seed,
            h_ref=args.h_ref, bracket_order=args.m,
            member_cap=args.member_cap, workers=args.workers,
        )
        results = {"series": [p.as_dict() for p in points]}
        rows = _series_rows([p.as_dict() for p in points], "t")
        print("growth series:", ", ".join(f"t={p.t}: {p.growth:.6g}" for p in points))
    with _open_out(args.out) as fh:
        if args.format == "json":
            _write_json(fh, config.echo(), results)
        else:
            _write_csv(fh, config.echo(), ("t", "metric", "value"), rows)
    return 0


def _cmd_smb(config: RunConfig) -> int:
    args = config.args
    xm = _load_source(args.x_model)
    ym = _load_source(args.y_model)
    spec = additive_cipher(xm.alphabet_size)
    report = concentration_experiment(
        xm, ym, spec, args.t_list, args.samples, args.eps, args.delta,
        args.seed, h_ref=args.h_ref, bracket_order=args.m,
        workers=args.workers,
    )
    results = report.as_dict()
    rows = _series_rows(results["rows"], "t")
    rows.append(("", "h_ref", report.h_ref))
    rows.append(("", "onset_length",
                 report.onset_length if report.onset_length is not None else "none"))
    print(
        "band fractions:",
        ", ".join(
            f"t={t}: {f:.4f}" for t, f in zip(report.lengths, report.band_fractions)
        ),
    )
    with _open_out(args.out) as fh:
        if args.format == "json":
            _write_json(fh, config.echo(), results)
        else:
            _write_csv(fh, config.echo(), ("t", "metric", "value"), rows)
    return 0


def _cmd_bounds(config: RunConfig) -> int:
    args = config.args
    xm = _load_source(args.x_model)
    ym = _load_source(args.y_model)
    spec = additive_cipher(xm.alphabet_size)
    report = certify_bounds(xm, ym, spec, args.m, workers=args.workers)
    results = report.as_dict()
    rows = [(args.m, key, value) for key, value in results.items()]
    print(
        f"h(X|Z) in [{report.bracket.lower:.12g}, {report.bracket.upper:.12g}], "
        f"corollary bound {report.bound_corollary:.12g}"
    )
    with _open_out(args.out) as fh:
        if args.format == "json":
            _write_json(fh, config.echo(), results)
        else:
            _write_csv(fh, config.echo(), ("m", "metric", "value"), rows)
    return 0


def _cmd_sweep(config: RunConfig) -> int:
    args = config.args
    xm = _load_source(args.x_model)
    spec = additive_cipher(xm.alphabet_size)
    reports = robustness_sweep(
        xm, spec, args.tau_list, args.m,
        t_list=args.t_list or None, epsilon=args.eps, seed=args.seed,
        workers=args.workers,
    )
    results = [r.as_dict() for r in reports]
    rows = []
    for report in reports:
        entry = report.as_dict()
        series = entry.pop("growth_series", None)
        for key, value in entry.items():
            if key != "tau":
                rows.append((report.tau, key, value))
        if series:
            for point in series:
                rows.append((report.tau, f"growth_t{point['t']}", point["growth"]))
                rows.append((report.tau, f"mass_t{point['t']}", point["mass"]))
    print(
        "h(X|Z) lower bounds:",
        ", ".join(f"tau={r.tau:g}: {r.bracket.lower:.12g}" for r in reports),
    )
    with _open_out(args.out) as fh:
        if args.format == "json":
            _write_json(fh, config.echo(), results)
        else:
            _write_csv(fh, config.echo(), ("tau", "metric", "value"), rows)
    return 0


# -- parser ----------------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="runkey", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p, *, seed_required=False, needs_y=True):
        p.add_argument("--x-model", required=True,
                       help="model file, or uniform:N / bernoulli:p0,p1,...")
        if needs_y:
            p.add_argument("--y-model", required=True)
        p.add_argument("--seed", type=int, required=seed_required)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", default=None)
        p.add_argument("--format", choices=("csv", "json"), default="json")

    p = sub.add_parser("train", help="fit a Markov model to a corpus")
    p.add_argument("--corpus", required=True, help="byte stream file, or - for stdin")
    p.add_argument("--bits", action="store_true",
                   help="expand bytes to bits, most significant first")
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--order", type=int, default=1)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--out", required=True)

    p = sub.add_parser("entropy", help="entropy rate and block entropies")
    p.add_argument("--x-model", required=True)
    p.add_argument("--m", dest="m_list", type=_int_list, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="json")

    for name in ("encrypt", "decrypt"):
        p = sub.add_parser(name, help=f"{name} with a running key")
        p.add_argument("--in", dest="in_path", required=True)
        p.add_argument("--key", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--n", type=int, default=256)
        p.add_argument("--bits", action="store_true")
        p.add_argument("--text", action="store_true",
                       help="read symbols as base-n text instead of raw bytes")

    p = sub.add_parser("posterior", help="exact posterior table for one ciphertext")
    add_common(p)
    p.add_argument("--z", required=True, help="ciphertext as base-n text")
    p.add_argument("--max-rows", type=int, default=4096,
                   help="largest table included in JSON output")

    p = sub.add_parser("psi", help="typical deciphering set / growth series")
    add_common(p)
    p.add_argument("--z", default=None)
    p.add_argument("--t", dest="t_list", type=_int_list, default=None)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--m", type=int, default=8, help="bracket order for h_ref")
    p.add_argument("--h-ref", type=float, default=None)
    p.add_argument("--member-cap", type=int, default=1 << 22)

    p = sub.add_parser("smb", help="posterior surprisal concentration experiment")
    add_common(p, seed_required=True)
    p.add_argument("--t", dest="t_list", type=_int_list, required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--h-ref", type=float, default=None)

    p = sub.add_parser("bounds", help="certified equivocation bounds")
    add_common(p)
    p.add_argument("--m", type=int, required=True)

    p = sub.add_parser("sweep", help="key-bias robustness sweep")
    add_common(p, needs_y=False)
    p.add_argument("--tau", dest="tau_list", type=_float_list, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--t", dest="t_list", type=_int_list, default=None)
    p.add_argument("--eps", type=float, default=0.05)

    return parser


_DISPATCH = {
    "train": _cmd_train,
    "entropy": _cmd_entropy,
    "encrypt": lambda cfg: _run_cipher_pass(cfg.args, "encrypt"),
    "decrypt": lambda cfg: _run_cipher_pass(cfg.args, "decrypt"),
    "posterior": _cmd_posterior,
    "psi": _cmd_psi,
    "smb": _cmd_smb,
    "bounds": _cmd_bounds,
    "sweep": _cmd_sweep,
}


def _splice_config(argv: list[str]) -> list[str]:
    if not argv:
        raise ConfigError("missing subcommand")
    if argv[0] in ("--version", "-h", "--help"):
        return argv
    if argv[0].startswith("-"):
        raise ConfigError("the subcommand must come first")
    rest = argv[1:]
    tokens: list[str] = []
    cleaned: list[str] = []
    i = 0
    while i < len(rest):
        item = rest[i]
        if item == "--config":
            if i + 1 >= len(rest):
                raise ConfigError("--config needs a file path")
            tokens.extend(_read_config_file(rest[i + 1]))
            i += 2
        elif item.startswith("--config="):
            tokens.extend(_read_config_file(item.split("=", 1)[1]))
            i += 1
        else:
            cleaned.append(item)
            i += 1
    return [argv[0]] + tokens + cleaned


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        spliced = _splice_config(argv)
        args = _build_parser().parse_args(spliced)
        config = RunConfig(subcommand=args.subcommand, args=args)
        return _DISPATCH[args.subcommand](config)
    except ConfigError as exc:
        return _fail("config", exc, 2)
    except (EnumerationCapError, StateCapError) as exc:
        return _fail("cap", exc, 3)
    except (ConvergenceError, CertificationError) as exc:
        return _fail("numeric", exc, 4)
    except (
        InvalidDistributionError,
        NotErgodicError,
        ModelFormatError,
        UnsupportedCipherError,
        ValueError,
        OSError,
    ) as exc:
        return _fail("config", exc, 2)


def _fail(category: str, exc: Exception, code: int) -> int:
    message = " ".join(str(exc).split())
    print(f"error: {category}: {message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
