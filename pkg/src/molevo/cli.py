"""Command-line surface: run an optimization, report on a finished run,
convert between molecular string formats.

Exit codes: 0 clean, 2 config error, 3 oracle or bridge failure, 4 corrupt
run record.
"""

from __future__ import annotations

import csv
import io
import json
import os
import sys
import warnings

import click

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import molgraph, selfies_codec
from .engine import Engine, EngineConfig
from .genetic_ops import MUTATION_KINDS, MutationTable
from .llm_ops import LlmClient, LlmEndpoint
from .metrics import objective_diversity, structural_diversity, topk_auc, topk_curve
from .oracle import (BridgeFailure, Objective, OracleError, OracleHandle,
                     TaskSpec)
from .records import CorruptRecordError, RunRecord


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"config key '{key}': {message}")
        self.key = key


def preset_path(name: str) -> str:
    here = os.path.dirname(os.path.abspath(__file__))
    return os.path.join(here, "presets", f"{name}.toml")


def default_pool_path() -> str:
    here = os.path.dirname(os.path.abspath(__file__))
    return os.path.join(here, "data", "seed_pool.smi")


def list_presets() -> list[str]:
    here = os.path.join(os.path.dirname(os.path.abspath(__file__)), "presets")
    return sorted(f[:-5] for f in os.listdir(here) if f.endswith(".toml"))


def _coerce(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply dotted-path k=v overrides; bare keys land in [engine]."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        key, _, value = item.partition("=")
        path = key.split(".") if "." in key else ["engine", key]
        node = cfg
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(key, "path runs through a non-table value")
        node[path[-1]] = _coerce(value)
    return cfg


def build_task(cfg: dict) -> TaskSpec:
    tree = cfg.get("task")
    if not isinstance(tree, dict):
        raise ConfigError("task", "missing [task] table")
    raw_objs = tree.get("objectives")
    if not raw_objs:
        raise ConfigError("task.objectives", "need at least one objective")
    objectives = []
    for i, o in enumerate(raw_objs):
        key = f"task.objectives[{i}]"
        try:
            objectives.append(Objective(
                name=o.get("name", f"objective_{i}"),
                oracle_id=o["oracle"],
                direction=o.get("direction", "maximize"),
                weight=float(o.get("weight", 1.0)),
                params=o.get("params", {}),
                bounds=tuple(o.get("bounds", (0.0, 1.0)))))
        except KeyError as exc:
            raise ConfigError(f"{key}.{exc.args[0]}", "missing required key")
        except ValueError as exc:
            raise ConfigError(key, str(exc))
    prompts = tree.get("prompts", {})
    try:
        return TaskSpec(
            name=tree.get("name", "task"),
            objectives=objectives,
            aggregation=tree.get("aggregation", "sum"),
            task_text=prompts.get("task_text", ""),
            objective_text=prompts.get("objective_text", ""),
            objective_definition=prompts.get("objective_definition", ""),
            mutation_objective_text=prompts.get("mutation_objective_text", ""),
            caption_text=prompts.get("caption_text", ""))
    except ValueError as exc:
        raise ConfigError("task", str(exc))


def build_engine_config(cfg: dict, seed=None) -> EngineConfig:
    tree = dict(cfg.get("engine", {}))
    if seed is not None:
        tree["seed"] = seed
    tree.pop("mutation_table", None)
    try:
        return EngineConfig(**tree)
    except TypeError as exc:
        bad = str(exc).split("'")[-2] if "'" in str(exc) else "?"
        raise ConfigError(f"engine.{bad}", "unknown key")
    except ValueError as exc:
        text = str(exc)
        key = next((f for f in ("n_c", "n_o", "p_m", "budget", "wiring",
                                "early_stop_window", "workers")
                    if f in text), "engine")
        raise ConfigError(f"engine.{key}", text)


def build_mutation_table(cfg: dict) -> MutationTable | None:
    tree = cfg.get("engine", {}).get("mutation_table")
    if tree is None:
        return None
    unknown = set(tree) - set(MUTATION_KINDS)
    if unknown:
        raise ConfigError(f"engine.mutation_table.{sorted(unknown)[0]}",
                          "unknown mutation kind")
    try:
        return MutationTable(probabilities=dict(tree))
    except ValueError as exc:
        raise ConfigError("engine.mutation_table", str(exc))


def build_llm_client(cfg: dict, transcript_path=None) -> LlmClient | None:
    tree = cfg.get("llm")
    if tree is None:
        return None
    try:
        endpoint = LlmEndpoint(
            base_url=tree["base_url"],
            model=tree.get("model", "default"),
            api_key_env=tree.get("api_key_env", "MOLEVO_LLM_TOKEN"),
            timeout=float(tree.get("timeout", 30.0)),
            max_retries=int(tree.get("max_retries", 2)),
            rpm=int(tree.get("rpm", 60)),
            temperature=float(tree.get("temperature", 0.7)))
    except KeyError as exc:
        raise ConfigError(f"llm.{exc.args[0]}", "missing required key")
    except ValueError as exc:
        raise ConfigError("llm", str(exc))
    return LlmClient(endpoint, transcript_path=transcript_path)


def load_config(path=None, preset=None) -> dict:
    if path is None and preset is None:
        raise ConfigError("config", "give --config or --preset")
    if path is None:
        path = preset_path(preset)
        if not os.path.exists(path):
            raise ConfigError(
                "preset", f"unknown preset {preset!r}; "
                f"available: {', '.join(list_presets())}")
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError("config", f"no such file: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"TOML parse error: {exc}")


@click.group()
def main():
    """Evolutionary molecular optimizer with pluggable proposal operators."""


@main.command("run")
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="TOML run configuration.")
@click.option("--preset", default=None,
              help="Name of a packaged task preset.")
@click.option("--seed", type=int, default=None, help="Random seed override.")
@click.option("--override", "overrides", multiple=True,
              help="Config override key=value (dotted paths allowed).")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Run directory (default: runs/<task>-seed<seed>).")
@click.option("--resume", "resume_dir", type=click.Path(), default=None,
              help="Resume from a previous run directory.")
@click.option("--pool", "pool_path", type=click.Path(), default=None,
              help="Seed pool file, one SMILES per line.")
def cmd_run(config_path, preset, seed, overrides, out_dir, resume_dir,
            pool_path):
    """Run an optimization and persist its artifacts."""
    try:
        if resume_dir is not None:
            config_path = os.path.join(resume_dir, "config.toml")
        cfg = load_config(config_path, preset)
        cfg = apply_overrides(cfg, overrides)
        task = build_task(cfg)
        engine_cfg = build_engine_config(cfg, seed)
        table = build_mutation_table(cfg)
        if pool_path is None:
            pool_path = cfg.get("pool", {}).get("path", default_pool_path())
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)

    if resume_dir is not None:
        run_dir = resume_dir
    elif out_dir is not None:
        run_dir = out_dir
    else:
        run_dir = os.path.join(
            "runs", f"{task.name}-seed{engine_cfg.seed}")
    os.makedirs(run_dir, exist_ok=True)

    try:
        llm = build_llm_client(
            cfg, transcript_path=os.path.join(run_dir, "transcript.jsonl"))
        if engine_cfg.wiring != "graphga" and llm is None:
            raise ConfigError("llm", "this wiring needs an [llm] table")
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)

    oracle = OracleHandle(task, engine_cfg.budget)
    engine = Engine(engine_cfg, task, oracle, llm_client=llm,
                    mutation_table=table, run_dir=run_dir)

    snapshot = os.path.join(run_dir, "config.toml")
    if resume_dir is None and os.path.abspath(snapshot) != \
            os.path.abspath(config_path or preset_path(preset)):
        with open(config_path or preset_path(preset), "rb") as src:
            data = src.read()
        with open(snapshot, "wb") as dst:
            dst.write(data)
            if overrides:
                dst.write(b"\n# applied overrides: " +
                          " ".join(overrides).encode() + b"\n")

    try:
        if resume_dir is not None:
            engine.resume(resume_dir)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            engine.run(pool_path)
    except (BridgeFailure, OracleError) as exc:
        click.echo(f"oracle failure: {exc}", err=True)
        sys.exit(3)
    except (ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)

    summary = engine.summary()
    click.echo(json.dumps(summary, indent=2, sort_keys=True))
    click.echo(f"run directory: {run_dir}")


def _report_tables(record: RunRecord, budget: int):
    scalars = record.scalars()
    n_obj = len(record.entries[0].normalized)
    curves = {k: topk_curve(scalars, k) for k in (1, 10, 100)}
    rows = []
    best = float("-inf")
    for i, e in enumerate(record.entries):
        best = max(best, e.scalar)
        row = {
            "call_index": e.call_index,
            "smiles": e.smiles,
            "scalar": repr(e.scalar),
            "best_so_far": repr(best),
            "top1_mean": repr(curves[1][i]),
            "top10_mean": repr(curves[10][i]),
            "top100_mean": repr(curves[100][i]),
            "generation": e.generation,
        }
        for j in range(n_obj):
            row[f"objective_{j}"] = repr(e.normalized[j])
        rows.append(row)

    summary = {"oracle_calls": len(scalars), "budget": budget}
    for k in (1, 10, 100):
        if k <= budget:
            summary[f"top{k}_auc"] = topk_auc(scalars, k, budget)
    if n_obj > 1:
        from .pareto import ObjectivePoint, hypervolume, pareto_frontier

        points = [ObjectivePoint(e.normalized, owner=i)
                  for i, e in enumerate(record.entries)]
        front = pareto_frontier(points)
        summary["pareto_front_size"] = len(front)
        summary["hypervolume"] = hypervolume(front)
        summary["objective_diversity"] = (
            objective_diversity(front) if len(front) >= 2 else 0.0)
        per_obj_aucs = [
            topk_auc(record.per_objective(j), 10, budget)
            for j in range(n_obj)]
        summary["sum_of_top10_aucs"] = sum(per_obj_aucs)
        summary["top10_auc_of_sum"] = summary.get("top10_auc")
    top_entries = sorted(record.entries, key=lambda e: e.scalar,
                         reverse=True)[:100]
    if len(top_entries) >= 2:
        mols = []
        for e in top_entries:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    mols.append(molgraph.parse_smiles(e.smiles))
            except molgraph.MolError:
                pass
        if len(mols) >= 2:
            summary["structural_diversity_top100"] = structural_diversity(mols)
    return rows, curves, summary


def _render_figures(record: RunRecord, curves, out_dir: str) -> list[str]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    calls = [e.call_index for e in record.entries]

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for k in (1, 10, 100):
        ax.plot(calls, curves[k], label=f"top-{k} mean")
    ax.set_xlabel("oracle calls")
    ax.set_ylabel("fitness")
    ax.set_title("running top-k mean fitness")
    ax.legend()
    fig.tight_layout()
    path = os.path.join(out_dir, "topk_curve.png")
    fig.savefig(path, dpi=120, metadata={"Software": "molevo"})
    plt.close(fig)
    written.append(path)

    n_obj = len(record.entries[0].normalized)
    if n_obj >= 2:
        from .pareto import ObjectivePoint, pareto_frontier

        points = [ObjectivePoint(e.normalized, owner=i)
                  for i, e in enumerate(record.entries)]
        front = {p.owner for p in pareto_frontier(points)}
        fig, ax = plt.subplots(figsize=(5.5, 5))
        xs = [e.normalized[0] for e in record.entries]
        ys = [e.normalized[1] for e in record.entries]
        ax.scatter(xs, ys, s=8, alpha=0.3, label="evaluated")
        fx = [record.entries[i].normalized[0] for i in sorted(front)]
        fy = [record.entries[i].normalized[1] for i in sorted(front)]
        ax.scatter(fx, fy, s=24, color="crimson", label="frontier")
        ax.set_xlabel("objective 0 (normalized)")
        ax.set_ylabel("objective 1 (normalized)")
        ax.set_title("objective space")
        ax.legend()
        fig.tight_layout()
        path = os.path.join(out_dir, "objective_space.png")
        fig.savefig(path, dpi=120, metadata={"Software": "molevo"})
        plt.close(fig)
        written.append(path)
    return written


@main.command("report")
@click.argument("run_dir", type=click.Path(exists=True))
@click.option("--csv", "csv_path", type=click.Path(), default=None,
              help="Where to write the CSV (default: <run_dir>/report.csv).")
@click.option("--no-figures", is_flag=True, default=False,
              help="Skip figure rendering.")
def cmd_report(run_dir, csv_path, no_figures):
    """Recompute metrics from a persisted run record."""
    record_path = os.path.join(run_dir, "record.jsonl")
    try:
        record = RunRecord.load_jsonl(record_path)
    except CorruptRecordError as exc:
        click.echo(f"corrupt record: {exc}", err=True)
        sys.exit(4)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    if not record.entries:
        click.echo("corrupt record: no entries (line 1)", err=True)
        sys.exit(4)

    budget = len(record.entries)
    summary_path = os.path.join(run_dir, "summary.json")
    if os.path.exists(summary_path):
        with open(summary_path, encoding="utf-8") as fh:
            budget = json.load(fh).get("budget", budget)

    rows, curves, summary = _report_tables(record, budget)
    if csv_path is None:
        csv_path = os.path.join(run_dir, "report.csv")
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(rows[0].keys()),
                            lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buffer.getvalue())

    out_dir = os.path.dirname(os.path.abspath(csv_path))
    if not no_figures:
        for path in _render_figures(record, curves, out_dir):
            click.echo(f"figure: {path}")
    click.echo(f"csv: {csv_path}")
    for key in sorted(summary):
        click.echo(f"{key}: {summary[key]}")


@main.command("convert")
@click.option("--from", "source_format", required=True,
              type=click.Choice(["smiles", "selfies"]),
              help="Input line format; output is the other one.")
@click.option("--rejects", "rejects_path", type=click.Path(), default=None,
              help="File collecting unconvertible lines with reasons.")
@click.argument("input_file", type=click.File("r"), default="-")
@click.option("-o", "--output", "output_file", type=click.File("w"),
              default="-")
def cmd_convert(source_format, rejects_path, input_file, output_file):
    """Convert between SMILES and SELFIES, line by line."""
    rejects = []
    for ln, line in enumerate(input_file, 1):
        text = line.strip()
        if not text:
            continue
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                if source_format == "smiles":
                    mol = molgraph.parse_smiles(text)
                    out = selfies_codec.encode_selfies(mol)
                else:
                    mol = selfies_codec.decode_selfies(text)
                    if mol.num_atoms() == 0:
                        raise selfies_codec.SelfiesError(
                            "decodes to an empty molecule")
                    out = molgraph.write_smiles(mol)
        except (molgraph.MolError, selfies_codec.SelfiesError) as exc:
            rejects.append(f"line {ln}: {text}\t# {exc}")
            continue
        output_file.write(out + "\n")
    if rejects_path is not None:
        with open(rejects_path, "w", encoding="utf-8") as fh:
            for item in rejects:
                fh.write(item + "\n")
    elif rejects:
        for item in rejects:
            click.echo(f"rejected {item}", err=True)


if __name__ == "__main__":
    main()
