"""LLM-backed proposal operators: prompt rendering, chat-completion HTTP
client with retry/rate limiting, reply parsing, and fallback-on-invalid.

The wire contract is the ubiquitous chat-completions JSON shape
({model, messages, temperature}); no vendor SDK is used.  Every exchange is
appended to a JSONL transcript for audit.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass

from . import genetic_ops, molgraph, selfies_codec
from .molgraph import Molecule
from .oracle import TaskSpec
from .records import Individual

TEMPLATE_IDS = ("gpt4-crossover", "biot5-mutation", "molstm-caption")

CROSSOVER_TEMPLATE = (
    "I have two molecules and their {task}. {definition}\n"
    "\n"
    "({smiles_a}, {fitness_a})\n"
    "({smiles_b}, {fitness_b})\n"
    "\n"
    "Please propose a new molecule that {objective}. You can either make "
    "crossover and mutations based on the given molecules or just propose "
    "a new molecule based on your knowledge.\n"
    "Your output should follow the format: {{<<<Explanation>>>: "
    "$EXPLANATION, <<<Molecule>>>: \\box{{$Molecule}}}}. Here are the "
    "requirements:\n"
    "1. $EXPLANATION should be your analysis.\n"
    "2. The $Molecule should be the smiles of your proposed molecule.\n"
    "3. The molecule should be valid."
)

MUTATION_TEMPLATE = (
    "Definition: You are given a molecule SELFIES. Your job is to generate "
    "a SELFIES molecule that {objective}. Now complete the following "
    "example - Input: <bom>{selfies}<eom> Output: "
)

CAPTION_TEMPLATE = "{caption}"


class PromptError(ValueError):
    pass


class LlmError(RuntimeError):
    pass


def _fmt_fitness(f: float) -> str:
    return repr(round(float(f), 4))


def render_prompt(template_id: str, task: TaskSpec, inputs) -> str:
    """Render a byte-stable prompt for the given task and molecule inputs.

    gpt4-crossover takes exactly two (smiles, fitness) pairs; biot5-mutation
    exactly one molecule (fitness ignored); molstm-caption takes none.
    """
    if template_id == "gpt4-crossover":
        if len(inputs) != 2:
            raise PromptError("crossover prompt needs exactly 2 scored inputs")
        (sa, fa), (sb, fb) = inputs
        definition = task.objective_definition.strip()
        head_def = definition if definition else ""
        text = CROSSOVER_TEMPLATE.format(
            task=task.task_text, definition=head_def,
            smiles_a=sa, fitness_a=_fmt_fitness(fa),
            smiles_b=sb, fitness_b=_fmt_fitness(fb),
            objective=task.objective_text)
        if not head_def:
            text = text.replace(f"their {task.task_text}. \n",
                                f"their {task.task_text}.\n", 1)
        return text
    if template_id == "biot5-mutation":
        if len(inputs) != 1:
            raise PromptError("mutation prompt needs exactly 1 input")
        item = inputs[0]
        selfies = item[0] if isinstance(item, tuple) else item
        return MUTATION_TEMPLATE.format(
            objective=task.mutation_objective_text, selfies=selfies)
    if template_id == "molstm-caption":
        if inputs:
            raise PromptError("caption template takes no molecule inputs")
        return CAPTION_TEMPLATE.format(caption=task.caption_text)
    raise PromptError(f"unknown template id {template_id!r}")


_BOX_RE = re.compile(r"\\?box\{([^{}]*)\}")


def parse_reply(text: str, template_id: str) -> str | None:
    """Extract a canonical SMILES from a model reply; None if unusable."""
    if template_id == "gpt4-crossover":
        m = _BOX_RE.search(text)
        if not m:
            return None
        candidate = m.group(1).strip()
        if not candidate:
            return None
        try:
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                mol = molgraph.parse_smiles(candidate)
        except molgraph.MolError:
            return None
        if not molgraph.validate(mol).ok or mol.num_atoms() == 0:
            return None
        return molgraph.write_smiles(mol)
    if template_id == "biot5-mutation":
        body = text.strip()
        for marker in ("<bom>", "<eom>"):
            body = body.replace(marker, "")
        try:
            mol = selfies_codec.decode_selfies(body.strip())
        except selfies_codec.SelfiesError:
            return None
        if mol.num_atoms() == 0 or not molgraph.validate(mol).ok:
            return None
        return molgraph.write_smiles(mol)
    raise PromptError(f"unknown template id {template_id!r}")


@dataclass
class LlmEndpoint:
    base_url: str
    model: str
    api_key_env: str = "MOLEVO_LLM_TOKEN"
    timeout: float = 30.0
    max_retries: int = 2
    rpm: int = 60
    temperature: float = 0.7

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.rpm <= 0:
            raise ValueError("rpm cap must be > 0")


@dataclass
class OperatorStats:
    queries: int = 0
    invalid: int = 0
    fallbacks: int = 0
    improving: int = 0

    def as_dict(self) -> dict:
        return {"queries": self.queries, "invalid": self.invalid,
                "fallbacks": self.fallbacks, "improving": self.improving}


class LlmClient:
    """Rate-limited chat-completion client with retries and a transcript.

    `transport` (prompt-payload dict -> reply content string) can replace the
    real HTTP POST, which is how tests inject mock models.
    """

    def __init__(self, endpoint: LlmEndpoint, transport=None,
                 transcript_path=None, clock=time.monotonic, sleep=time.sleep):
        self.endpoint = endpoint
        self.transport = transport
        self.transcript_path = transcript_path
        self._clock = clock
        self._sleep = sleep
        self._last_request = None
        self._lock = threading.Lock()

    def _throttle(self) -> None:
        min_interval = 60.0 / self.endpoint.rpm
        with self._lock:
            now = self._clock()
            if self._last_request is not None:
                wait = self._last_request + min_interval - now
                if wait > 0:
                    self._sleep(wait)
                    now = self._clock()
            self._last_request = now

    def _post(self, payload: dict) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.endpoint.api_key_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        resp = requests.post(self.endpoint.base_url, json=payload,
                             headers=headers, timeout=self.endpoint.timeout)
        resp.raise_for_status()
        return resp.json()["choices"][0]["message"]["content"]

    def _transcribe(self, entry: dict) -> None:
        if self.transcript_path is None:
            return
        with open(self.transcript_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def complete(self, prompt: str, stats: "OperatorStats | None" = None) -> str:
        payload = {
            "model": self.endpoint.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.endpoint.temperature,
        }
        last_error = None
        for attempt in range(self.endpoint.max_retries + 1):
            self._throttle()
            if stats is not None:
                stats.queries += 1
            try:
                if self.transport is not None:
                    reply = self.transport(payload)
                else:
                    reply = self._post(payload)
                self._transcribe({"prompt": prompt, "reply": reply,
                                  "attempt": attempt})
                return reply
            except Exception as exc:  # noqa: BLE001 - every failure retries
                last_error = exc
                self._transcribe({"prompt": prompt, "error": str(exc),
                                  "attempt": attempt})
        raise LlmError(f"LLM request failed after retries: {last_error}")


def llm_crossover(client: LlmClient, task: TaskSpec, a: Individual,
                  b: Individual, fallback_rng, stats: OperatorStats,
                  crossover_fn=genetic_ops.crossover) -> Molecule | None:
    """LLM child if the reply is valid, else the default crossover."""
    prompt = render_prompt("gpt4-crossover", task,
                           [(a.smiles, a.fitness), (b.smiles, b.fitness)])
    smiles = None
    try:
        reply = client.complete(prompt, stats)
        smiles = parse_reply(reply, "gpt4-crossover")
        if smiles is None:
            stats.invalid += 1
    except LlmError:
        stats.invalid += 1
    if smiles is not None:
        return molgraph.parse_smiles(smiles)
    stats.fallbacks += 1
    return crossover_fn(a.molecule, b.molecule, fallback_rng)


def llm_mutate(client: LlmClient, task: TaskSpec,
               ind: Individual, stats: OperatorStats) -> Molecule | None:
    """Decoded LLM edit of one molecule; None on any failure."""
    selfies = selfies_codec.encode_selfies(ind.molecule)
    prompt = render_prompt("biot5-mutation", task, [selfies])
    try:
        reply = client.complete(prompt, stats)
    except LlmError:
        stats.invalid += 1
        return None
    smiles = parse_reply(reply, "biot5-mutation")
    if smiles is None:
        stats.invalid += 1
        return None
    return molgraph.parse_smiles(smiles)
