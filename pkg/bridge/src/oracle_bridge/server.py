"""Line-delimited JSON serve loop.

Protocol, one JSON object per line over stdin/stdout:
  handshake (server -> client):  {"oracle": NAME, "version": 1}
  request   (client -> server):  {"id": N, "smiles": S}
  response  (server -> client):  {"id": N, "score": X}
                            or   {"id": N, "error": MESSAGE}
Malformed requests get an error response and the loop continues; EOF exits 0.
An unknown oracle name exits 2 after an error handshake object.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import scoring


def serve(oracle_name: str, params: dict, stdin=None, stdout=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout

    def emit(obj: dict) -> None:
        stdout.write(json.dumps(obj) + "\n")
        stdout.flush()

    try:
        score = scoring.make_oracle(oracle_name, params)
    except KeyError:
        emit({"error": f"unknown oracle {oracle_name!r}",
              "available": sorted(scoring.ORACLES)})
        return 2

    emit({"oracle": oracle_name, "version": 1})
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            emit({"id": None, "error": f"unreadable request: {exc}"})
            continue
        req_id = request.get("id")
        smiles = request.get("smiles")
        if not isinstance(smiles, str):
            emit({"id": req_id, "error": "request needs a 'smiles' string"})
            continue
        try:
            emit({"id": req_id, "score": score(smiles)})
        except Exception as exc:  # noqa: BLE001 - fault isolation per request
            emit({"id": req_id, "error": f"{type(exc).__name__}: {exc}"})
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="Serve a molecular property oracle over stdin/stdout.")
    parser.add_argument("--oracle", required=True,
                        help="Oracle name (echo, qed, sa, logp, activity).")
    parser.add_argument("--params", default="{}",
                        help="JSON object of oracle parameters.")
    args = parser.parse_args(argv)
    try:
        params = json.loads(args.params)
        if not isinstance(params, dict):
            raise ValueError("params must be a JSON object")
    except (json.JSONDecodeError, ValueError) as exc:
        print(json.dumps({"error": f"bad --params: {exc}"}), flush=True)
        return 2
    return serve(args.oracle, params)


if __name__ == "__main__":
    sys.exit(main())
