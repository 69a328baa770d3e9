"""Config-driven command-line pipeline.

Subcommands: synth, ingest, build-graph, pretrain, glpf, train, evaluate,
analyze, theorem-probe, sweep.  Every command reads a JSON config
(defaults apply when none is given), accepts dotted overrides via
--set section.key=value, stamps the config fingerprint into each artifact
it writes, and embeds the fully explicit effective config into its JSON
outputs.  Outputs are written atomically, so a failing command leaves no
partial files.  Exit codes: 0 success, 1 input/capability error, 2
numeric or training error.
"""

import argparse
import json
import os
import sys

from freqrec import dataset as ds
from freqrec.analysis import (
    attenuation_metric,
    emit_report,
    theorem1_probe,
    trace_spectral_profile,
)
from freqrec.config import fingerprint, load_config
from freqrec.errors import FreqRecError, InputError, NumericError
from freqrec.evalharness import baselines, evaluate
from freqrec.glpf import PolyFilterSpec, polynomial_filter
from freqrec.graph import build_cooccurrence, load_graph, save_graph
from freqrec.model.embeddings import (
    PretrainConfig,
    load_external,
    pretrain_id_embeddings,
    save_table,
    text_surrogate_embeddings,
)
from freqrec.model.network import RecModel, init_backbone, init_fusion_mlp
from freqrec.model.training import (
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train,
)
from freqrec.tfm import ButterworthSpec


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _atomic(path, writer):
    tmp = f"{path}.part"
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def _emit_json(path, payload):
    text = json.dumps(payload, sort_keys=True)
    if path:
        def write(tmp):
            with open(tmp, "w", encoding="utf-8") as fh:
                fh.write(text)
        _atomic(path, write)
    print(text)


def _workers(cfg):
    return cfg["workers"] if cfg["workers"] > 0 else (os.cpu_count() or 1)


def _load_split(cfg, data_path):
    log = ds.ingest(data_path, format=cfg["dataset"]["format"])
    split = ds.build_split(log, min_interactions=cfg["dataset"]["min_interactions"],
                           max_seq_len=cfg["dataset"]["max_seq_len"])
    split.fingerprint = fingerprint(cfg)
    return split


def _glpf_spec(cfg):
    g = cfg["glpf"]
    if g["coefficients"] is not None:
        return PolyFilterSpec(tuple(g["coefficients"]))
    return PolyFilterSpec.first_order(g["alpha"])


def _tfm_spec(cfg):
    return ButterworthSpec(cutoff=cfg["tfm"]["cutoff"], order=cfg["tfm"]["order"])


def _build_model(cfg, id_table, text_table, graph=None, tfm_enabled=None):
    m = cfg["model"]
    enabled = cfg["tfm"]["enabled"] if tfm_enabled is None else tfm_enabled
    mlp = init_fusion_mlp(id_table.dim + text_table.dim, m["d_model"],
                          hidden=m["mlp_hidden"], seed=m["mlp_seed"],
                          activation=m["activation"])
    backbone = init_backbone(n_layers=cfg["backbone"]["layers"], d_model=m["d_model"],
                             n_heads=cfg["backbone"]["heads"], seed=cfg["backbone"]["seed"],
                             ffn_mult=cfg["backbone"]["ffn_mult"],
                             tfm_enabled=enabled, tfm_spec=_tfm_spec(cfg),
                             tfm_residual=cfg["tfm"]["residual"],
                             tfm_causal_safe=cfg["tfm"]["causal_safe"])
    token_filter = None
    if cfg["glpf"]["enabled"] and cfg["glpf"]["apply_to"] == "fused":
        if graph is None:
            raise InputError("glpf.apply_to=fused needs --graph at model build time")
        spec = _glpf_spec(cfg)
        token_filter = lambda tokens: polynomial_filter(graph, spec, tokens)
    return RecModel(id_table=id_table, text_table=text_table, mlp=mlp,
                    backbone=backbone, token_filter=token_filter)


def _check_fingerprints(named, force):
    prints = {name: fp for name, fp in named.items() if fp}
    missing = [name for name, fp in named.items() if not fp]
    distinct = set(prints.values())
    if force:
        return
    if missing:
        raise InputError(
            f"artifacts without a config fingerprint: {', '.join(missing)} "
            "(pass --force to evaluate anyway)")
    if len(distinct) > 1:
        detail = ", ".join(f"{k}={v}" for k, v in sorted(prints.items()))
        raise InputError(f"config fingerprints disagree: {detail} "
                         "(pass --force to evaluate anyway)")


def cmd_synth(args, cfg):
    s = cfg["synth"]
    log, affinity = ds.synthesize(ds.SynthConfig(
        users=s["users"], items=s["items"], mean_length=s["mean_length"],
        rho=s["rho"], seed=s["seed"], with_text=s["with_text"]))
    _atomic(args.out, lambda tmp: ds.write_tsv(log, tmp))
    if args.affinity_out:
        def write_affinity(tmp):
            with open(tmp, "w", encoding="utf-8") as fh:
                for row in affinity:
                    fh.write(",".join(repr(float(x)) for x in row) + "\n")
        _atomic(args.affinity_out, write_affinity)
    _emit_json(args.summary, {"events": log.n_events,
                              "fingerprint": fingerprint(cfg), "config": cfg})
    return 0


def cmd_ingest(args, cfg):
    log = ds.ingest(args.input, format=args.format or cfg["dataset"]["format"])
    split = ds.build_split(log, min_interactions=cfg["dataset"]["min_interactions"],
                           max_seq_len=cfg["dataset"]["max_seq_len"])
    if args.out:
        _atomic(args.out, lambda tmp: ds.write_tsv(log, tmp))
    payload = split.summary()
    payload["filter_trace"] = split.filter_trace
    payload["fingerprint"] = fingerprint(cfg)
    payload["config"] = cfg
    _emit_json(args.summary, payload)
    return 0


def cmd_build_graph(args, cfg):
    split = _load_split(cfg, args.data)
    graph = build_cooccurrence(split, binarize=True)
    graph.fingerprint = fingerprint(cfg)
    _atomic(args.out, lambda tmp: save_graph(graph, tmp))
    _emit_json(None, {"n_items": graph.n_items, "nnz": graph.nnz // 2,
                      "fingerprint": graph.fingerprint})
    return 0


def cmd_pretrain(args, cfg):
    split = _load_split(cfg, args.data)
    p = cfg["pretrain"]
    id_table, losses = pretrain_id_embeddings(split, PretrainConfig(
        dim=cfg["model"]["d_id"], window=p["window"], negatives=p["negatives"],
        epochs=p["epochs"], lr=p["lr"], seed=p["seed"], chunk=p["chunk"]))
    text_table = text_surrogate_embeddings(split, d_text=cfg["model"]["d_text"],
                                           seed=p["seed"])
    id_table.fingerprint = fingerprint(cfg)
    text_table.fingerprint = fingerprint(cfg)
    _atomic(args.out_id, lambda tmp: save_table(id_table, tmp))
    _atomic(args.out_text, lambda tmp: save_table(text_table, tmp))
    _emit_json(None, {"losses": losses, "fingerprint": id_table.fingerprint,
                      "id_stats": id_table.norm_stats(),
                      "text_stats": text_table.norm_stats()})
    return 0


def cmd_glpf(args, cfg):
    graph = load_graph(args.graph)
    table = load_external(args.embeddings)
    if table.n_items != graph.n_items:
        raise InputError(f"embedding table covers {table.n_items} items, graph "
                         f"{graph.n_items}")
    spec = _glpf_spec(cfg)
    if cfg["glpf"]["enabled"]:
        table.rows = polynomial_filter(graph, spec, table.rows)
    table.fingerprint = fingerprint(cfg)
    _atomic(args.out, lambda tmp: save_table(table, tmp))
    _emit_json(None, {"enabled": cfg["glpf"]["enabled"],
                      "coefficients": list(spec.coefficients),
                      "fingerprint": table.fingerprint})
    return 0


def cmd_train(args, cfg):
    split = _load_split(cfg, args.data)
    id_table = load_external(args.id, expect_dim=cfg["model"]["d_id"])
    text_table = load_external(args.text, expect_dim=cfg["model"]["d_text"])
    graph = load_graph(args.graph) if args.graph else None
    model = _build_model(cfg, id_table, text_table, graph=graph)
    t = cfg["training"]
    result = train(model, split, TrainConfig(
        lr=t["lr"], batch_size=t["batch_size"], epochs=t["epochs"],
        patience=t["patience"], n_negatives=t["n_negatives"], seed=t["seed"],
        weight_decay=t["weight_decay"], eval_seed=cfg["eval"]["seed"],
        eval_candidates=cfg["eval"]["n_candidates"]),
        log_path=None, workers=_workers(cfg))
    _atomic(args.out, lambda tmp: save_checkpoint(model, tmp,
                                                  fingerprint=fingerprint(cfg),
                                                  extra={"config": cfg}))
    if args.log:
        _atomic(args.log, lambda tmp: result.write_log(tmp))
    _emit_json(None, {"best_epoch": result.best_epoch,
                      "best_valid_ndcg": result.best_valid_ndcg,
                      "epochs_run": len(result.entries),
                      "aborted": result.aborted,
                      "fingerprint": fingerprint(cfg)})
    return 2 if result.aborted else 0


def cmd_evaluate(args, cfg):
    split = _load_split(cfg, args.data)
    id_table = load_external(args.id)
    text_table = load_external(args.text)
    model, header = load_checkpoint(args.checkpoint, id_table, text_table)
    named = {"run-config": fingerprint(cfg),
             "id-embeddings": id_table.fingerprint,
             "text-embeddings": text_table.fingerprint,
             "checkpoint": header.get("fingerprint", "")}
    if args.graph:
        named["graph"] = load_graph(args.graph).fingerprint
    _check_fingerprints(named, args.force)
    report = evaluate(model, split, phase=args.phase, seed=cfg["eval"]["seed"],
                      k=cfg["eval"]["k"], n_candidates=cfg["eval"]["n_candidates"],
                      workers=_workers(cfg), fingerprint=fingerprint(cfg))
    payload = {"metrics": {"ndcg": report.ndcg, "recall": report.recall,
                           "k": report.k, "phase": report.phase,
                           "n_users": report.n_users,
                           "n_excluded": report.n_excluded},
               "fingerprint": fingerprint(cfg), "config": cfg}
    if args.with_baselines:
        floors = baselines(split, phase=args.phase, seed=cfg["eval"]["seed"],
                           k=cfg["eval"]["k"], n_candidates=cfg["eval"]["n_candidates"])
        payload["baselines"] = {name: {"ndcg": rep.ndcg, "recall": rep.recall}
                                for name, rep in floors.items()}
    _emit_json(args.out, payload)
    if args.per_user:
        _atomic(args.per_user, lambda tmp: report.per_user_csv(tmp))
    return 0


def cmd_analyze(args, cfg):
    split = _load_split(cfg, args.data)
    id_table = load_external(args.id)
    text_table = load_external(args.text)
    graph = load_graph(args.graph)
    fp = fingerprint(cfg)
    modes = {"on": [True], "off": [False], "both": [True, False]}[args.tfm]
    sequences = split.windows()
    summary = {"fingerprint": fp, "config": cfg, "modes": {}}
    for enabled in modes:
        if args.checkpoint:
            model, _ = load_checkpoint(args.checkpoint, id_table, text_table)
            model.backbone.tfm_enabled = enabled
        else:
            model = _build_model(cfg, id_table, text_table, graph=graph,
                                 tfm_enabled=enabled)
        profile = trace_spectral_profile(model, sequences, graph,
                                         n_bands=cfg["analysis"]["n_bands"],
                                         workers=_workers(cfg), fingerprint=fp)
        mode = "on" if enabled else "off"
        base = f"{args.out_prefix}_tfm-{mode}_{fp}"
        _atomic(base + ".csv", lambda tmp: emit_report(profile, tmp, format="csv"))
        _atomic(base + ".json", lambda tmp: emit_report(profile, tmp, format="json"))
        att = attenuation_metric(profile)
        shares = profile.shares()
        summary["modes"][mode] = {
            "profile_csv": base + ".csv",
            "users": profile.user_count,
            "skipped_short": profile.skipped_short,
            "skipped_degenerate": profile.skipped_degenerate,
            "band1_input_share": float(shares[0, 0]),
            "band1_final_share": float(shares[-1, 0]),
            "attenuation": att.band_summary(),
        }
    _emit_json(args.out, summary)
    return 0


def cmd_theorem_probe(args, cfg):
    a = cfg["analysis"]
    spec = None if args.identity else _tfm_spec(cfg)
    report = theorem1_probe(spec, args.family, rho=a["theorem_rho"],
                            t_range=(a["theorem_t_min"], a["theorem_t_max"]),
                            trials=a["theorem_trials"], seed=a["theorem_seed"],
                            workers=_workers(cfg))
    _atomic(args.out, lambda tmp: emit_report(report, tmp, format="json"))
    _emit_json(None, report.to_dict())
    return 0


def cmd_sweep(args, cfg):
    import copy as _copy

    values = [float(v) for v in args.values.split(",")]
    split = _load_split(cfg, args.data)
    id_table = load_external(args.id)
    text_table = load_external(args.text)
    graph = load_graph(args.graph) if args.graph else None
    rows = []
    for value in values:
        run_cfg = _copy.deepcopy(cfg)
        table = load_external(args.id)
        if args.param == "alpha":
            run_cfg["glpf"]["alpha"] = value
            run_cfg["glpf"]["enabled"] = True
            if graph is None:
                raise InputError("alpha sweep needs --graph")
            table.rows = polynomial_filter(graph, _glpf_spec(run_cfg), table.rows)
        else:
            run_cfg["tfm"]["cutoff"] = value
            run_cfg["tfm"]["enabled"] = True
        model = _build_model(run_cfg, table, text_table)
        t = run_cfg["training"]
        train(model, split, TrainConfig(
            lr=t["lr"], batch_size=t["batch_size"], epochs=t["epochs"],
            patience=t["patience"], n_negatives=t["n_negatives"], seed=t["seed"],
            weight_decay=t["weight_decay"], eval_seed=run_cfg["eval"]["seed"],
            eval_candidates=run_cfg["eval"]["n_candidates"]),
            workers=_workers(cfg))
        report = evaluate(model, split, phase="test", seed=run_cfg["eval"]["seed"],
                          k=run_cfg["eval"]["k"],
                          n_candidates=run_cfg["eval"]["n_candidates"],
                          workers=_workers(cfg))
        rows.append((value, report.ndcg, report.recall))

    def write_rows(tmp):
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(f"{args.param},ndcg,recall\n")
            for value, ndcg, recall in rows:
                fh.write(f"{value!r},{ndcg!r},{recall!r}\n")

    _atomic(args.out, write_rows)
    _emit_json(None, {"param": args.param,
                      "rows": [{args.param: v, "ndcg": n, "recall": r}
                               for v, n, r in rows],
                      "fingerprint": fingerprint(cfg)})
    return 0


def build_parser():
    parser = _Parser(prog="freqrec",
                     description="Frequency-aware sequential recommendation lab")
    parser.add_argument("--config", default=os.environ.get("FREQREC_CONFIG"),
                        help="JSON config path (defaults apply when omitted; "
                             "FREQREC_CONFIG sets the default path)")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field, e.g. --set glpf.alpha=0.5")
    parser.add_argument("--workers", type=int, default=None,
                        help="bound parallel per-user work (default: machine)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a locality-controlled interaction log")
    p.add_argument("--out", required=True)
    p.add_argument("--affinity-out")
    p.add_argument("--summary")
    p.add_argument("--users", dest="alias_synth_users")
    p.add_argument("--items", dest="alias_synth_items")
    p.add_argument("--mean-length", dest="alias_synth_mean_length")
    p.add_argument("--rho", dest="alias_synth_rho")
    p.add_argument("--seed", dest="alias_synth_seed")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("ingest", help="parse, dedup and summarize an interaction log")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["tsv", "jsonlines"])
    p.add_argument("--out", help="write the canonical deduplicated TSV here")
    p.add_argument("--summary")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("build-graph", help="item co-occurrence graph from training views")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_build_graph)

    p = sub.add_parser("pretrain", help="train ID embeddings and text surrogates")
    p.add_argument("--data", required=True)
    p.add_argument("--out-id", required=True)
    p.add_argument("--out-text", required=True)
    p.set_defaults(fn=cmd_pretrain)

    p = sub.add_parser("glpf", help="low-pass filter an embedding table on the graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", dest="alias_glpf_alpha")
    p.set_defaults(fn=cmd_glpf)

    p = sub.add_parser("train", help="train the fusion MLP against a frozen backbone")
    p.add_argument("--data", required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--graph", help="needed when glpf.apply_to=fused")
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="leave-one-out ranking metrics")
    p.add_argument("--data", required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--graph")
    p.add_argument("--phase", choices=["valid", "test"], default="test")
    p.add_argument("--out")
    p.add_argument("--per-user")
    p.add_argument("--with-baselines", action="store_true")
    p.add_argument("--force", action="store_true",
                   help="skip the config-fingerprint consistency check")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("analyze", help="layer-wise band-energy profiles")
    p.add_argument("--data", required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--tfm", choices=["on", "off", "both"], default="both")
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("theorem-probe", help="filtering theorem statistics on a graph family")
    p.add_argument("--family", choices=["ring", "locality"], required=True)
    p.add_argument("--identity", action="store_true",
                   help="probe the identity filter instead of the configured one")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_theorem_probe)

    p = sub.add_parser("sweep", help="grid over alpha or cutoff: filter+train+evaluate")
    p.add_argument("--param", choices=["alpha", "cutoff"], required=True)
    p.add_argument("--values", required=True, help="comma-separated grid values")
    p.add_argument("--data", required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--graph")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_sweep)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise InputError(f"--set expects KEY=VALUE, got {item!r}")
            key, value = item.split("=", 1)
            overrides[key] = value
        # convenience flags are sugar for --set section.key=value
        for name, value in vars(args).items():
            if name.startswith("alias_") and value is not None:
                section, _, key = name[len("alias_"):].partition("_")
                overrides[f"{section}.{key}"] = value
        cfg = load_config(args.config, overrides)
        if args.workers is not None:
            cfg["workers"] = args.workers
        return args.fn(args, cfg)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 2
    except FreqRecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
