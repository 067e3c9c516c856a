"""Thin command-line client for the experiment service.

Every data-touching subcommand talks HTTP to a running service (start one
with ``safe-lcmdp serve``); the client only parses arguments, ships requests,
and writes returned artifacts to local paths.  Config files (TOML or JSON)
provide defaults that explicit flags override.

Subcommands: serve, gen-env, run, summarize.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import httpx

DEFAULT_SERVER = "http://127.0.0.1:8321"


def parse_seeds(spec: str) -> list[int]:
    """'1..10' (inclusive), '1,2,5', or a single integer."""
    spec = spec.strip()
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    if "," in spec:
        return [int(x) for x in spec.split(",") if x.strip()]
    return [int(spec)]


def parse_hyper(items: list[str]) -> dict:
    out = {}
    for item in items:
        if "=" not in item:
            raise SystemExit(f"--hyper expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    text = Path(path).read_bytes()
    if path.endswith(".json"):
        return json.loads(text)
    try:
        import tomllib  # py311+
    except ModuleNotFoundError:
        import tomli as tomllib
    return tomllib.loads(text.decode())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="safe-lcmdp", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="start the experiment service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8321)
    serve.add_argument("--workdir", default=None, help="where job outputs live server-side")

    gen = sub.add_parser("gen-env", help="generate a seeded environment file")
    gen.add_argument("--env", required=True, choices=["tabular", "streaming", "linear"])
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--num-states", type=int, default=None)
    gen.add_argument("--d", type=int, default=None)
    gen.add_argument("--out", required=True, help="path for the environment JSON")
    gen.add_argument("--server", default=DEFAULT_SERVER)

    run = sub.add_parser("run", help="run a seeded experiment and fetch its metrics files")
    run.add_argument("--algo", choices=["opse", "ghosh", "dope", "uniform", "oplbsp"])
    run.add_argument("--env", choices=["tabular", "streaming", "linear", "bandit"])
    run.add_argument("--episodes", type=int, default=None)
    run.add_argument("--seeds", "--seed", dest="seeds", default=None, help="e.g. 1, 1..10, or 2,4,8")
    run.add_argument("--out", required=True, help="local directory for metrics files")
    run.add_argument("--config", default=None, help="TOML or JSON config file with defaults")
    run.add_argument("--eval-stride", type=int, default=None)
    run.add_argument("--no-timing", action="store_true", help="zero the wall_ms column (reproducible bytes)")
    run.add_argument("--hyper", action="append", default=[], help="agent hyperparameter override, key=value")
    run.add_argument("--num-states", type=int, default=None)
    run.add_argument("--d", type=int, default=None)
    run.add_argument("--poll-interval", type=float, default=0.5)
    run.add_argument("--server", default=DEFAULT_SERVER)

    summ = sub.add_parser("summarize", help="aggregate per-seed files into mean/std per episode")
    summ.add_argument("--in", dest="inputs", required=True, nargs="+", help="metrics files or a directory")
    summ.add_argument("--out", required=True)
    summ.add_argument("--server", default=DEFAULT_SERVER)

    return p


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.workdir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_gen_env(args) -> int:
    payload = {"env": args.env, "seed": args.seed}
    if args.num_states is not None:
        payload["num_states"] = args.num_states
    if args.d is not None:
        payload["d"] = args.d
    with httpx.Client(base_url=args.server, timeout=300.0) as client:
        resp = client.post("/envs/generate", json=payload)
        _raise_for_status(resp)
        doc = resp.json()
    Path(args.out).write_text(doc["document"])
    print(
        f"wrote {args.out}: env={doc['env']} seed={doc['seed']} "
        f"S={doc['num_states']} A={doc['num_actions']} d={doc['d']} b={doc['b']:.6g} xi={doc['slack']:.6g}"
    )
    return 0


def cmd_run(args) -> int:
    file_cfg = load_config_file(args.config)
    request = {
        "env": args.env or file_cfg.get("env"),
        "algo": args.algo or file_cfg.get("algo"),
        "episodes": args.episodes or file_cfg.get("episodes"),
        "seeds": parse_seeds(args.seeds) if args.seeds else file_cfg.get("seeds"),
        "env_params": dict(file_cfg.get("env_params", {})),
        "hypers": {**file_cfg.get("hypers", {}), **parse_hyper(args.hyper)},
        "eval_stride": args.eval_stride or file_cfg.get("eval_stride", 1),
        "record_timing": (not args.no_timing) and file_cfg.get("record_timing", True),
    }
    if args.num_states is not None:
        request["env_params"]["num_states"] = args.num_states
    if args.d is not None:
        request["env_params"]["d"] = args.d
    missing = [k for k in ("env", "algo", "episodes", "seeds") if not request[k]]
    if missing:
        raise SystemExit(f"missing required option(s): {', '.join(missing)}")
    if isinstance(request["seeds"], str):
        request["seeds"] = parse_seeds(request["seeds"])

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with httpx.Client(base_url=args.server, timeout=300.0) as client:
        resp = client.post("/experiments", json=request)
        _raise_for_status(resp)
        job_id = resp.json()["job_id"]
        print(f"job {job_id} submitted ({request['algo']} on {request['env']}, "
              f"{len(request['seeds'])} seed(s) x {request['episodes']} episodes)")
        while True:
            status = client.get(f"/experiments/{job_id}")
            _raise_for_status(status)
            doc = status.json()
            if doc["status"] in ("done", "failed"):
                break
            time.sleep(args.poll_interval)
        names = client.get(f"/experiments/{job_id}/files")
        _raise_for_status(names)
        for name in names.json()["files"]:
            content = client.get(f"/experiments/{job_id}/files/{name}")
            _raise_for_status(content)
            (out_dir / name).write_text(content.json()["content"])
            print(f"fetched {out_dir / name}")
    if doc["status"] != "done":
        print(f"job {job_id} failed: {doc.get('detail')}", file=sys.stderr)
        return 1
    return 0


def cmd_summarize(args) -> int:
    paths: list[Path] = []
    for item in args.inputs:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(q for q in p.iterdir() if q.suffix == ".csv"))
        else:
            paths.append(p)
    if not paths:
        raise SystemExit("no metrics files found")
    files = [{"name": p.name, "content": p.read_text()} for p in paths]
    with httpx.Client(base_url=args.server, timeout=300.0) as client:
        resp = client.post("/summarize", json={"files": files})
        _raise_for_status(resp)
        Path(args.out).write_text(resp.json()["content"])
    print(f"wrote {args.out} ({len(paths)} input file(s))")
    return 0


def _raise_for_status(resp: httpx.Response) -> None:
    if resp.status_code >= 400:
        try:
            detail = resp.json().get("detail", resp.text)
        except Exception:
            detail = resp.text
        raise SystemExit(f"server error {resp.status_code}: {detail}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "serve": cmd_serve,
        "gen-env": cmd_gen_env,
        "run": cmd_run,
        "summarize": cmd_summarize,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
