"""Command-line entry points and the standalone server process.

Subcommands: ``keygen`` (emit key bundles and a fresh index), ``enroll``
(templates or a synthetic batch), ``identify`` (candidate report),
``serve`` (socket server speaking the wire frames), ``experiment``
(statistics harness from a config file), ``bench`` (per-phase timing
report), ``selftest`` (built-in invariant battery).

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 protocol
error; one-line diagnostics go to stderr.  All randomness flows from one
32-byte hex ``--seed`` when given, making runs reproducible.
"""

from __future__ import annotations

import argparse
import os
import signal
import sys
import time
from pathlib import Path

from . import crypto, index_io, pir, protocol
from .bloom import BucketedFilter, membership_fp_probability
from .errors import (
    ConfigError,
    DecryptionError,
    DimensionError,
    FeseError,
    FormatError,
    ParameterError,
    ProtocolError,
)
from .games import receiver_views, sender_views
from .identification import (
    ExperimentConfig,
    IdentityRegistry,
    enroll,
    identify,
    run_experiment,
)
from .lsh import analytic_collision_prob, build_family
from .protocol import (
    SchemeClient,
    SchemeFrameHandler,
    SchemeParams,
    scheme_keygen,
)
from .rng import derive_rng, fresh_rng, parse_seed, random_seed
from .templates import (
    BinaryTemplate,
    hamming_distance,
    perturb_bsc,
    random_template,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PROTOCOL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- configuration ------------------------------------------------------

_SCHEME_KEYS = {
    "template_bits": int,
    "digest_bits": int,
    "lsh_count": int,
    "bloom_count": int,
    "bucket_count": int,
    "bucket_capacity": int,
    "match_threshold": str,
    "near_radius": int,
    "far_radius": int,
    "tag_bits": int,
    "group": str,
    "mode": str,
    "transport": str,
}
_EXPERIMENT_KEYS = {
    "enrolled": int,
    "genuine_trials": int,
    "impostor_trials": int,
    "flip_prob": float,
    "parallel": int,
}
_REQUIRED_SCHEME = (
    "template_bits",
    "digest_bits",
    "lsh_count",
    "bloom_count",
    "bucket_count",
    "bucket_capacity",
    "near_radius",
    "far_radius",
)


def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; blank lines and # comments allowed."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        known = set(_SCHEME_KEYS) | set(_EXPERIMENT_KEYS)
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _convert(key: str, value: str, typ):
    try:
        return typ(value)
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: cannot parse {value!r}") from exc


def params_from_config(cfg: dict[str, str]) -> SchemeParams:
    missing = [k for k in _REQUIRED_SCHEME if k not in cfg]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    vals = {}
    for key, typ in _SCHEME_KEYS.items():
        if key in ("match_threshold", "group", "mode", "transport", "tag_bits"):
            continue
        vals[key] = _convert(key, cfg[key], typ)
    family_size = vals["lsh_count"] * vals["bloom_count"]
    threshold_raw = cfg.get("match_threshold", "full")
    threshold = family_size if threshold_raw == "full" else _convert(
        "match_threshold", threshold_raw, int
    )
    params = SchemeParams(
        match_threshold=threshold,
        tag_bits=_convert("tag_bits", cfg.get("tag_bits", "32"), int),
        group_name=cfg.get("group", "modp2048"),
        mode=cfg.get("mode", protocol.MODE_BASE),
        transport=cfg.get("transport", protocol.TRANSPORT_DIRECT),
        **vals,
    )
    params.validate()
    return params


def experiment_from_config(cfg: dict[str, str], parallel: int | None) -> ExperimentConfig:
    params = params_from_config(cfg)
    config = ExperimentConfig(
        params=params,
        enrolled=_convert("enrolled", cfg.get("enrolled", "100"), int),
        genuine_trials=_convert("genuine_trials", cfg.get("genuine_trials", "200"), int),
        impostor_trials=_convert("impostor_trials", cfg.get("impostor_trials", "200"), int),
        flip_prob=_convert("flip_prob", cfg.get("flip_prob", "0.02"), float),
        parallel=parallel or _convert("parallel", cfg.get("parallel", "1"), int),
    )
    config.validate()
    return config


def _load_config(path: str | None) -> dict[str, str]:
    # FESE_CONFIG supplies the default path when --config is omitted
    path = path or os.environ.get("FESE_CONFIG")
    if not path:
        raise UsageError("no --config given and FESE_CONFIG is not set")
    return parse_config_text(Path(path).read_text())


def _seed_from_args(args) -> bytes:
    if args.seed:
        try:
            return parse_seed(args.seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    seed = random_seed()
    print(f"fese: generated seed {seed.hex()}", file=sys.stderr)
    return seed


def _parse_endpoint(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ConfigError(f"endpoint must be host:port, got {text!r}")
    return host, int(port)


def _open_channel(args, bundle_digest: bytes):
    """Channel plus an optional (header, state, index_path) for local mode."""
    if getattr(args, "server", None):
        host, port = _parse_endpoint(args.server)
        return pir.SocketChannel(host, port), None
    info, state = index_io.load_index(args.index)
    if info.digest != bundle_digest:
        raise FormatError(
            "header mismatch: index and key bundle disagree on scheme parameters"
        )
    rng = derive_rng(_seed_from_args(args), "server") if args.seed else fresh_rng()
    handler = SchemeFrameHandler(state, rng)
    return pir.LocalChannel(handler), (info.raw, state)


# -- subcommands --------------------------------------------------------


def cmd_keygen(args) -> int:
    params = params_from_config(_load_config(args.config))
    seed = _seed_from_args(args)
    public, secret, state = scheme_keygen(params, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    index_io.save_public_bundle(out / "public.fesp", public)
    index_io.save_secret_bundle(out / "secret.fess", secret)
    index_io.save_index(out / "index.fese", protocol.header_bytes(public), state)
    print(f"header_digest = {protocol.header_digest(public).hex()}")
    print(f"public_bundle = {out / 'public.fesp'}")
    print(f"secret_bundle = {out / 'secret.fess'}")
    print(f"index = {out / 'index.fese'}")
    return EXIT_OK


def cmd_enroll(args) -> int:
    public = index_io.load_public_bundle(args.public)
    if not args.template and not args.synthetic:
        raise UsageError("need --template files or --synthetic COUNT")
    channel, local = _open_channel(args, protocol.header_digest(public))
    seed = _seed_from_args(args)
    client = SchemeClient(public, channel, derive_rng(seed, "enroll"))

    ledger_path = Path(args.public).with_suffix(".ledger")
    if client.params.update_mode == pir.UpdateModes.REWRITE and ledger_path.exists():
        client.pir.fill_ledger = index_io.load_ledger(ledger_path)

    registry_path = Path(args.registry)
    registry = (
        IdentityRegistry.load(registry_path)
        if registry_path.exists()
        else IdentityRegistry()
    )

    jobs: list[tuple[str, BinaryTemplate]] = []
    for path in args.template or []:
        identity = args.identity or Path(path).stem
        jobs.append((identity, BinaryTemplate.load(path)))
    if args.synthetic:
        rng = derive_rng(seed, "synthetic-templates")
        base = len(registry)
        for k in range(args.synthetic):
            jobs.append(
                (
                    f"user-{base + k:05d}",
                    random_template(public.params.template_bits, rng),
                )
            )

    for identity, template in jobs:
        user = enroll(identity, template, client, registry)
        print(f"enrolled {user.pseudo_identity} identifier={user.identifier}")

    registry.save(registry_path)
    if client.params.update_mode == pir.UpdateModes.REWRITE:
        index_io.save_ledger(ledger_path, client.pir.fill_ledger)
    if local is not None:
        header, state = local
        index_io.save_index(args.index, header, state)
    channel.close()
    return EXIT_OK


def cmd_identify(args) -> int:
    secret = index_io.load_secret_bundle(args.secret)
    channel, _ = _open_channel(args, protocol.header_digest(secret.public_bundle))
    seed = _seed_from_args(args)
    client = SchemeClient(secret, channel, derive_rng(seed, "identify"))
    registry_path = Path(args.registry) if args.registry else None
    registry = (
        IdentityRegistry.load(registry_path)
        if registry_path and registry_path.exists()
        else IdentityRegistry()
    )
    template = BinaryTemplate.load(args.template)
    result = identify(template, client, registry, include_templates=False)
    print(f"candidates = {len(result.candidates)}")
    for c in result.candidates:
        identity = c.pseudo_identity or "?"
        verdict = "yes" if c.verified else "no"
        print(
            f"candidate identifier={c.identifier} identity={identity} "
            f"distance={c.distance} verified={verdict}"
        )
    print(f"matches = {','.join(result.identities) if result.identities else '-'}")
    channel.close()
    return EXIT_OK


def cmd_serve(args) -> int:
    info, state = index_io.load_index(args.index)
    seed = _seed_from_args(args)
    handler = SchemeFrameHandler(state, derive_rng(seed, "server"))
    server = pir.FrameServer((args.host, args.port), handler)
    host, port = server.server_address
    print(f"serving {args.index} on {host}:{port}", flush=True)

    def _terminate(signum, frame):
        raise KeyboardInterrupt

    signal.signal(signal.SIGTERM, _terminate)
    try:
        server.serve_forever(poll_interval=0.1)
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown_request = lambda *a: None  # tolerate in-flight closes
        server.server_close()
        if not args.no_save:
            index_io.save_index(args.index, info.raw, state)
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = _load_config(args.config)
    config = experiment_from_config(cfg, args.parallel)
    seed = _seed_from_args(args)
    report = run_experiment(config, seed)
    text = report.to_text()
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    if args.trial_log:
        report.write_trial_log(args.trial_log)
        print(f"wrote {args.trial_log}")
    return EXIT_OK


def cmd_bench(args) -> int:
    params = params_from_config(_load_config(args.config))
    seed = _seed_from_args(args)

    t0 = time.perf_counter()
    public, secret, state = scheme_keygen(params, seed)
    t_keygen = time.perf_counter() - t0

    handler = SchemeFrameHandler(state, derive_rng(seed, "bench-server"))
    client = SchemeClient(secret, pir.LocalChannel(handler), derive_rng(seed, "bench"))
    rng = derive_rng(seed, "bench-templates")
    templates = [random_template(params.template_bits, rng) for _ in range(args.sends)]

    t0 = time.perf_counter()
    for t in templates:
        client.send(t)
    t_send = time.perf_counter() - t0

    comp = public.composite()
    probes = [perturb_bsc(t, 0.02, rng) for t in templates[: args.retrieves]]
    t0 = time.perf_counter()
    for p in probes:
        comp.indices(p)
    t_hash = time.perf_counter() - t0

    before = dict(client.stats)
    bytes_before = client.transferred_bytes
    t0 = time.perf_counter()
    hits = sum(len(client.retrieve(p)) for p in probes)
    t_retrieve = time.perf_counter() - t0

    print(f"keygen_seconds = {t_keygen:.4f}")
    print(f"send_count = {len(templates)}")
    print(f"send_seconds_total = {t_send:.4f}")
    print(f"retrieve_count = {len(probes)}")
    print(f"retrieve_seconds_total = {t_retrieve:.4f}")
    print(f"retrieve_hash_seconds_total = {t_hash:.4f}")
    print(f"hash_evals_per_retrieve = {params.family_size}")
    print(f"decryptions_total = {client.stats['decryptions'] - before['decryptions']}")
    print(f"dlogs_total = {client.stats['dlogs'] - before['dlogs']}")
    print(f"bucket_bytes_transferred = {client.transferred_bytes - bytes_before}")
    print(f"retrieved_total = {hits}")
    return EXIT_OK


# -- selftest -----------------------------------------------------------


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise AssertionError(message)


def _selftest_suite(quick: bool):
    trials = 200 if quick else 2000

    def templates_metric():
        rng = derive_rng(b"\x01" * 32, "selftest-templates")
        for _ in range(50):
            a = random_template(64, rng)
            b = random_template(64, rng)
            c = random_template(64, rng)
            _check(hamming_distance(a, a) == 0, "identity distance")
            _check(hamming_distance(a, b) == hamming_distance(b, a), "symmetry")
            _check(
                hamming_distance(a, c)
                <= hamming_distance(a, b) + hamming_distance(b, c),
                "triangle inequality",
            )
        t = random_template(64, rng)
        _check(perturb_bsc(t, 0.0, rng) == t, "zero noise")
        _check(perturb_bsc(t, 1.0, rng) == t.complement(), "certain flip")

    def lsh_behaviour():
        rng = derive_rng(b"\x02" * 32, "selftest-lsh")
        fam = build_family(64, 6, 4, rng)
        x = random_template(64, rng)
        _check(fam.eval_all(x) == fam.eval_all(x), "deterministic digests")
        probs = [analytic_collision_prob(r, 64, 6) for r in range(0, 65, 8)]
        _check(all(a > b for a, b in zip(probs, probs[1:])), "collision prob decreasing")

    def bloom_law():
        rng = derive_rng(b"\x03" * 32, "selftest-bloom")
        from .bloom import element_indices

        key = bytes(32)
        store = BucketedFilter(100)
        members = [rng.randbytes(8) for _ in range(3)]
        for y in members:
            store.add_at(element_indices(key, 3, 100, y), y)
        hits = sum(
            store.contains_at(element_indices(key, 3, 100, rng.randbytes(8)))
            for _ in range(trials * 25)
        )
        expected = membership_fp_probability(3, 100, 3) * trials * 25
        _check(hits <= expected * 4 + 10, f"false positives {hits} vs {expected:.1f}")

    def crypto_laws():
        group = crypto.get_group("toy61")
        rng = derive_rng(b"\x04" * 32, "selftest-crypto")
        kp = crypto.keygen(group, rng)
        for _ in range(20):
            x = group.random_element(rng)
            y = group.random_element(rng)
            cx = crypto.eg_encrypt(group, kp.public, x, rng)
            cy = crypto.eg_encrypt(group, kp.public, y, rng)
            _check(crypto.eg_decrypt(group, kp.secret, cx) == x, "round trip")
            _check(
                crypto.eg_decrypt(group, kp.secret, crypto.eg_mul(group, cx, cy))
                == group.mul(x, y),
                "homomorphic multiply",
            )
        s, t = 777, group.random_exponent(rng)
        shares = crypto.split_secret(s, 5, group, rng)
        powered = [group.pow(a, t) for a in shares.shares]
        base = group.pow(group.gen, t)
        _check(
            crypto.discrete_log_small(
                group, base, crypto.combine_shares(group, powered), 1 << 20
            )
            == s,
            "share re-randomization",
        )
        blob = rng.randbytes(100)
        sealed = crypto.payload_encrypt(group, kp.public, blob, rng)
        _check(crypto.payload_decrypt(group, kp.secret, sealed) == blob, "payload cipher")

    def protocol_roundtrip():
        seed = b"\x05" * 32
        params = SchemeParams(
            template_bits=64,
            digest_bits=4,
            lsh_count=4,
            bloom_count=2,
            bucket_count=64,
            bucket_capacity=4,
            match_threshold=8,
            near_radius=6,
            far_radius=20,
            tag_bits=20,
            group_name="toy61",
        )
        public, secret, state = scheme_keygen(params, seed)
        client = SchemeClient(
            secret,
            pir.LocalChannel(SchemeFrameHandler(state, derive_rng(seed, "s"))),
            derive_rng(seed, "c"),
        )
        rng = derive_rng(seed, "t")
        x = random_template(64, rng)
        phi = client.send(x)
        _check(phi in client.retrieve(x), "exact retrieve")
        _check(client.fetch_template(phi) == x, "payload round trip")

    def privacy_views():
        seed = b"\x06" * 32
        params = SchemeParams(
            template_bits=64,
            digest_bits=4,
            lsh_count=2,
            bloom_count=2,
            bucket_count=32,
            bucket_capacity=4,
            match_threshold=4,
            near_radius=6,
            far_radius=20,
            tag_bits=20,
            group_name="toy61",
            transport=protocol.TRANSPORT_BATCH,
        )
        public, secret, state = scheme_keygen(params, seed)
        rng = derive_rng(seed, "t")
        x0, x1 = random_template(64, rng), random_template(64, rng)
        v0, v1 = sender_views(public, state, x0, x1, seed)
        _check(v0.structure() == v1.structure(), "sender view structure")
        r0, r1 = receiver_views(secret, state, x0, x1, seed)
        _check(r0.to_bytes() == r1.to_bytes(), "receiver views byte-identical")

    return [
        ("templates-metric", templates_metric),
        ("lsh-behaviour", lsh_behaviour),
        ("bloom-false-positive-law", bloom_law),
        ("crypto-laws", crypto_laws),
        ("protocol-roundtrip", protocol_roundtrip),
        ("privacy-views", privacy_views),
    ]


def cmd_selftest(args) -> int:
    failures = 0
    for name, fn in _selftest_suite(args.quick):
        try:
            fn()
        except AssertionError as exc:
            print(f"FAIL {name}: {exc}")
            failures += 1
        else:
            print(f"PASS {name}")
    if failures:
        print(f"{failures} check(s) failed")
        return EXIT_DATA
    return EXIT_OK


# -- argument wiring ----------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="fese", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="generate key bundles and a fresh index")
    p.add_argument("--config")
    p.add_argument("--seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("enroll", help="store templates and record identities")
    p.add_argument("--public", required=True)
    p.add_argument("--index")
    p.add_argument("--server")
    p.add_argument("--template", action="append")
    p.add_argument("--identity")
    p.add_argument("--synthetic", type=int)
    p.add_argument("--registry", required=True)
    p.add_argument("--seed")
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("identify", help="retrieve and verify candidates")
    p.add_argument("--secret", required=True)
    p.add_argument("--index")
    p.add_argument("--server")
    p.add_argument("--template", required=True)
    p.add_argument("--registry")
    p.add_argument("--seed")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("serve", help="serve an index over a socket")
    p.add_argument("--index", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--seed")
    p.add_argument("--no-save", action="store_true")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("experiment", help="run the statistics harness")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--trial-log")
    p.add_argument("--parallel", type=int)
    p.add_argument("--seed")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("bench", help="per-phase timing report")
    p.add_argument("--config")
    p.add_argument("--seed")
    p.add_argument("--sends", type=int, default=20)
    p.add_argument("--retrieves", type=int, default=20)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("selftest", help="run the built-in invariant battery")
    p.add_argument("--quick", action="store_true")
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"fese: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ProtocolError as exc:
        print(f"fese: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (ConfigError, FormatError, DimensionError, ParameterError, DecryptionError) as exc:
        print(f"fese: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FeseError as exc:
        print(f"fese: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"fese: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
