"""Command-line entry points.

Subcommands: probe, sample, calibrate, train-extractor, serve-edge,
run-device, simulate, bench (with `bench run` and `bench pipeline`).
All output is JSON on stdout unless --out is given.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import bandit as bd
from .backends import Role, SyntheticProfile, TraceBackend
from .calibration import constrained_softmax, ece, fit_temperature
from .container import probe_video
from .core import SystemConfig, load_config, validate_config
from .harness import (CostModel, NetworkModel, SyntheticEnv, TraceEnv,
                      fit_policy, run_benchmark, simulate_network, split_profiling)
from .pipeline import StageSpec, run_pipeline
from .sampler import select_frames
from .transport import EdgeServer, OffloadSession


def _emit(obj, out: str | None):
    text = json.dumps(obj, indent=2)
    if out:
        with open(out, "w", encoding="utf-8") as f:
            f.write(text + "\n")
    else:
        print(text)


def _load_cfg(args) -> SystemConfig:
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        cfg = SystemConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    if getattr(args, "network", None):
        up, down, rtt = (float(x) for x in args.network.split(","))
        cfg = SystemConfig.from_dict({**cfg.to_dict(), "up_mbps": up,
                                      "down_mbps": down, "rtt_ms": rtt})
    errs = validate_config(cfg)
    if errs:
        sys.exit("invalid config: " + "; ".join(errs))
    return cfg


def cmd_probe(args):
    meta = probe_video(args.video)
    _emit(meta.to_dict(), args.out)


def cmd_sample(args):
    cfg = _load_cfg(args)
    if args.n_min:
        cfg = SystemConfig.from_dict({**cfg.to_dict(), "n_min": args.n_min})
    if args.n_max:
        cfg = SystemConfig.from_dict({**cfg.to_dict(), "n_max": args.n_max})
    meta = probe_video(args.video)
    picked = select_frames(meta, cfg)
    _emit({"indices": list(picked.indices), "source": picked.source.value,
           "count": len(picked.indices)}, args.out)


def cmd_calibrate(args):
    trace = TraceBackend(args.trace)
    role = Role(args.role)
    samples, preds_before = [], []
    for (qid, r, density), rec in trace.records.items():
        if r != role.value or rec.get("gt") is None:
            continue
        resp = trace.answer(qid, role, density)
        gt = resp.ground_truth_index
        samples.append((resp.logits, gt))
        dist = constrained_softmax(resp.logits, 1.0)
        preds_before.append((dist.confidence, dist.argmax() == gt))
    if not samples:
        sys.exit("trace has no labeled records for this role")
    model = fit_temperature(samples)
    preds_after = []
    for (lv, gt) in samples:
        dist = constrained_softmax(lv, model.T)
        preds_after.append((dist.confidence, dist.argmax() == gt))
    before, after = ece(preds_before), ece(preds_after)
    _emit({"T": model.T, "n_fit": model.n_fit, "nll": model.fit_nll,
           "ece_before": before.ece, "ece_after": after.ece,
           "bins": [list(b) for b in after.bins]}, args.out)


def cmd_train_extractor(args):
    cfg = _load_cfg(args)
    trace = TraceBackend(args.profiling)
    env = TraceEnv(trace, cfg, CostModel())
    queries = env.make_queries()
    actions = trace.densities() or cfg.actions
    policy = fit_policy(env, queries, cfg, actions=actions)
    bd.save_bundle_file(args.out_model, policy.extractor,
                        [policy.pca_txt, policy.pca_vis], policy.state)
    print(json.dumps({"model": args.out_model, "rows": len(policy.dataset),
                      "actions": list(actions), "T_small": policy.t_small,
                      "T_large": policy.t_large}))


def _synthetic_env_factory(cfg, args):
    profile = SyntheticProfile(
        gamma=args.gamma, agreement_target=args.agreement,
        peak_density=args.peak_density, actions=cfg.actions,
    )
    cost = CostModel()
    return lambda seed: SyntheticEnv(profile, cfg, cost, seed=seed), cost


def cmd_serve_edge(args):
    cfg = _load_cfg(args)
    profile = SyntheticProfile(gamma=args.gamma, actions=cfg.actions)
    env = SyntheticEnv(profile, cfg, CostModel(), seed=cfg.seed)
    server = EdgeServer(env.edge_backend(), temperature=args.temperature,
                        host=args.host, port=args.port)
    print(f"edge listening on {server.address[0]}:{server.address[1]}", file=sys.stderr)
    server.serve_forever()


def cmd_run_device(args):
    cfg = _load_cfg(args)
    factory, cost = _synthetic_env_factory(cfg, args)
    env = factory(cfg.seed)
    queries = env.make_queries(args.queries)
    prof_q, test_q = split_profiling(queries, 0.3, cfg.seed)
    policy = fit_policy(env, prof_q, cfg)
    session = OffloadSession(args.host, args.port, timeout_s=cfg.offload_timeout_s)
    from .harness import System
    system = System(env, cfg, cost, solution="QuickGrasp", policy=policy, session=session)
    results = [system.answer_query(q) for q in test_q]
    session.close()
    from .harness import summarize
    _emit(summarize(results), args.out)


def cmd_simulate(args):
    cfg = _load_cfg(args)
    model = NetworkModel.from_config(cfg)
    if args.payload_bytes is not None:
        _emit({"delay_ms": simulate_network(args.payload_bytes, args.direction, model)},
              args.out)
        return
    factory, cost = _synthetic_env_factory(cfg, args)
    report = run_benchmark(factory, cfg, cost, [args.solution], args.queries,
                           seeds=tuple(range(args.runs)))
    _emit(report, args.out)


def cmd_bench_run(args):
    cfg = _load_cfg(args)
    factory, cost = _synthetic_env_factory(cfg, args)
    solutions = []
    for name in args.solution:
        if name.startswith("FixedDensity("):
            solutions.append(("FixedDensity", int(name[13:-1])))
        else:
            solutions.append(name)
    report = run_benchmark(factory, cfg, cost, solutions, args.queries,
                           seeds=tuple(range(args.runs)))
    _emit(report, args.out)


def cmd_bench_pipeline(args):
    d, p, e = (float(x) for x in args.stage_times.split(","))
    delays = {"decode": d / 1000.0, "preprocess": p / 1000.0, "encode": e / 1000.0}

    def handler(name):
        def run(batch):
            time.sleep(delays[name])
            return batch if name != "encode" else np.zeros((1, 1, 1), dtype=np.float32)
        return run

    stages = tuple(StageSpec(name, handler(name), args.queue_capacity)
                   for name in ("decode", "preprocess", "encode"))
    _, report = run_pipeline(list(range(args.batches)), stages)
    _emit(report.to_dict(), args.out)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tokenbridge")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, network=False):
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        if network:
            p.add_argument("--network", default=None, metavar="UP,DOWN,RTT")

    p = sub.add_parser("probe", help="print container metadata as JSON")
    p.add_argument("--video", required=True)
    common(p)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("sample", help="print selected frame indices")
    p.add_argument("--video", required=True)
    p.add_argument("--n-min", type=int, default=None)
    p.add_argument("--n-max", type=int, default=None)
    common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("calibrate", help="fit temperature on a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--role", choices=["small", "large"], required=True)
    common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("train-extractor", help="profile a trace into a model bundle")
    p.add_argument("--profiling", required=True, help="trace file")
    p.add_argument("--out", dest="out_model", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train_extractor)

    p = sub.add_parser("serve-edge", help="run the edge inference orchestrator")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7461)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--temperature", type=float, default=1.0)
    common(p)
    p.set_defaults(func=cmd_serve_edge)

    p = sub.add_parser("run-device", help="device orchestrator against a live edge")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7461)
    p.add_argument("--queries", type=int, default=200)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--agreement", type=float, default=None)
    p.add_argument("--peak-density", type=int, default=16)
    common(p, network=True)
    p.set_defaults(func=cmd_run_device)

    p = sub.add_parser("simulate", help="network-delay arithmetic or a one-solution run")
    p.add_argument("--payload-bytes", type=int, default=None)
    p.add_argument("--direction", choices=["up", "down"], default="up")
    p.add_argument("--solution", default="QuickGrasp")
    p.add_argument("--queries", type=int, default=1000)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--agreement", type=float, default=0.7)
    p.add_argument("--peak-density", type=int, default=16)
    common(p, network=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="benchmarks")
    bench_sub = p.add_subparsers(dest="bench_command", required=True)

    pr = bench_sub.add_parser("run", help="compare serving solutions")
    pr.add_argument("--solution", nargs="+", default=["DeviceNative", "QuickGrasp"])
    pr.add_argument("--queries", type=int, default=2000)
    pr.add_argument("--runs", type=int, default=5)
    pr.add_argument("--gamma", type=float, default=2.0)
    pr.add_argument("--agreement", type=float, default=0.7)
    pr.add_argument("--peak-density", type=int, default=16)
    common(pr, network=True)
    pr.set_defaults(func=cmd_bench_run)

    pp = bench_sub.add_parser("pipeline", help="run the real threaded pipeline with synthetic delays")
    pp.add_argument("--stage-times", required=True, metavar="D,P,E",
                    help="per-batch stage times in ms")
    pp.add_argument("--batches", type=int, required=True)
    pp.add_argument("--queue-capacity", type=int, default=2)
    common(pp)
    pp.set_defaults(func=cmd_bench_pipeline)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
