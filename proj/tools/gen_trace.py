#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Deterministic synthetic IDE activity trace in the #vme-events v1 format.

Usage: gen_trace.py [--events N] [--seed S] > trace.events
"""
import argparse
import json
import random
import sys

START = 1740992400000  # 2025-03-03T09:00:00Z

PROJECTS = [
    ("svc", "py", ["api/handlers.py", "api/models.py", "core/db.py", "tests/test_api.py"],
     ["pytest tests", "python -m svc.app", "pip install requests", "git commit -am wip"],
     ["import requests", "from flask import Flask", "import numpy as np"]),
    ("cli", "rs", ["src/main.rs", "src/args.rs", "src/io.rs"],
     ["cargo build", "cargo test", "cargo run", "git status"],
     ["use serde::Deserialize;", "use clap::Parser;"]),
    ("web", "ts", ["src/app.ts", "src/routes.ts", "src/view.tsx"],
     ["npm run build", "npm test", "npm start", "git diff"],
     ["import express from 'express';", "import React from 'react';"]),
]

CODE = {
    "py": ["def handle(req):", "    return jsonify(items)", "# validate the payload", "    if not user:",
           "        raise KeyError(uid)", "class Repo:"],
    "rs": ["fn parse(input: &str) -> Args {", "    let cfg = Config::load()?;", "// read the manifest",
           "    Ok(())", "}", "impl Display for Args {"],
    "ts": ["export function route(app: App) {", "  const user = await db.find(id);", "// render the list",
           "  return res.json(rows);", "}", "interface Props { id: string }"],
}


def event(eid, ts, source, kind, path=None, rng=None, payload=None):
    return json.dumps({"event_id": eid, "timestamp": ts, "source": source, "kind": kind,
                       "path": path, "range": rng, "payload": payload}, separators=(",", ":"))


def generate(n, seed):
    r = random.Random(seed)
    out = []
    ts = START
    day = 0
    while len(out) < n:
        # One working session on one project.
        proj, ext, files, cmds, imports = PROJECTS[r.randrange(len(PROJECTS))]
        session_len = r.randint(25, 70)
        fail_bias = max(0.1, 0.6 - 0.08 * day)
        current = f"{proj}/{r.choice(files)}"
        line = r.randint(5, 120)
        for _ in range(session_len):
            if len(out) >= n:
                break
            ts += r.choice([400, 900, 1500, 3000, 6000, 15000, 40000])
            p = r.random()
            eid = len(out) + 1
            if p < 0.40:
                text = r.choice(CODE[ext]) + "\n"
                if r.random() < 0.08:
                    text = r.choice(imports) + "\n"
                if r.random() < 0.15:
                    line += r.randint(-2, 2)
                    line = max(1, line)
                else:
                    line = r.randint(1, 200)
                out.append(event(eid, ts, "user", "edit_insert", current, [line, 0, line, 0], text))
            elif p < 0.47:
                out.append(event(eid, ts, "user", "edit_delete", current, [line, 0, line + 1, 0], "old line\n"))
            elif p < 0.55:
                out.append(event(eid, ts, "user", "file_save", current))
            elif p < 0.66:
                current = f"{proj}/{r.choice(files)}"
                line = r.randint(1, 200)
                kind = "navigate" if r.random() < 0.6 else "file_open"
                rng = [line, 0, line, 0] if kind == "navigate" else None
                out.append(event(eid, ts, "user", kind, current, rng))
            elif p < 0.76:
                cmd = r.choice(cmds)
                ok = r.random() > fail_bias
                out.append(event(eid, ts, "user", "terminal_command", None, None, cmd))
                if len(out) < n:
                    ts += 800
                    body = "done" if ok else "error: command failed"
                    out.append(event(len(out) + 1, ts, "ide", "terminal_output", None, None, body))
                if len(out) < n:
                    ts += 50
                    out.append(event(len(out) + 1, ts, "ide", "terminal_output", None, None,
                                     f"#vme-exit {0 if ok else 1}"))
            elif p < 0.82:
                out.append(event(eid, ts, "user", "shortcut", current, None,
                                 r.choice(["ctrl+p", "ctrl+shift+f", "f12", "ctrl+/"])))
            elif p < 0.88:
                out.append(event(eid, ts, "user", "select", current, [line, 0, line, 12], "selection"))
            elif p < 0.94:
                out.append(event(eid, ts, "ide", "edit_insert", current, [1, 0, 1, 0], "# formatted\n"))
            else:
                out.append(event(eid, ts, "agent", "edit_insert", current, [line, 0, line + 3, 0],
                                 "generated block\n"))
        # Gap before the next session: a break, or the next day.
        if r.random() < 0.35:
            day += 1
            ts = START + day * 86400000 + r.randint(0, 3600000)
        else:
            ts += r.randint(20, 90) * 60000
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--events", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    sys.stdout.write("#vme-events v1\n")
    for line in generate(args.events, args.seed):
        sys.stdout.write(line + "\n")


if __name__ == "__main__":
    main()
