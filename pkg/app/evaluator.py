"""
Rubric Evaluator

Handles:
- Deterministic checks -> per-step raw scores (0/1/2) per dimension
- The qualitative judge for E4/E6, merged by per-step minimum
- Weighted cumulative score normalized to 10
"""

import json
import logging
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

from .checks import CheckSpec, evaluate_check
from .errors import JudgeUnavailable, MissingDimension, ProviderError
from .models import Dimension, DimensionScore, RubricResult, Transcript
from .providers import JUDGE_PREFIX, CompletionProvider

logger = logging.getLogger(__name__)

DEFAULT_WEIGHTS: Dict[Dimension, float] = {
    Dimension.E1: 1.0,
    Dimension.E2: 1.0,
    Dimension.E3: 1.0,
    Dimension.E4: 1.5,
    Dimension.E5: 1.5,
    Dimension.E6: 1.0,
}

# What a score of 2 means, per dimension
RUBRIC_CRITERIA = {
    Dimension.E1: "Exact SLR lookup values (e.g. 0.54, 6.81), exact layer ids (sl-baseline-v3) and exact GIS field names (DEMOGIDX_2).",
    Dimension.E2: "ARIA wrappers on canvas elements, keyboard handlers (keydown) and tabindex on interactive controls.",
    Dimension.E3: "Class-based manager pattern, references to the centralized CONFIG and CustomEvent dispatch.",
    Dimension.E4: "Accurate reuse of methods, events and config keys defined in prior steps.",
    Dimension.E5: "Zero use of MutationObserver and exact preservation of critical DOM ids (ej-polygons1).",
    Dimension.E6: "Matches the actual implementation: correct class names, method signatures and event names.",
}

_JUDGE_SYSTEM = (
    "You are a strict code-review judge. Score each listed step on a 3-point scale: "
    "0 = non-compliant, 1 = partially compliant, 2 = fully compliant."
)
_RETRY_SYSTEM = (
    "Return ONLY valid JSON of the form {\"scores\": {\"<step>\": 0|1|2}}. "
    "No prose, no code fences."
)


# -----------------------------------------------------------------------------
# Deterministic Checks
# -----------------------------------------------------------------------------

def dimension_steps(manifest: Sequence[CheckSpec]) -> Dict[Dimension, List[int]]:
    """Applicable steps per dimension: the union of its checks' steps."""
    steps: Dict[Dimension, set] = {d: set() for d in Dimension}
    for spec in manifest:
        steps[spec.dimension].update(spec.steps)
    return {d: sorted(s) for d, s in steps.items()}


def _raw_score(passed: int, total: int) -> int:
    if passed == total:
        return 2
    if 2 * passed >= total:
        return 1
    return 0


def _aggregate(per_step_raw: Mapping[int, int]) -> float:
    if not per_step_raw:
        return 0.0
    return float(Fraction(sum(per_step_raw.values()), len(per_step_raw)))


def run_checks(transcript: Transcript, manifest: Sequence[CheckSpec]) -> List[DimensionScore]:
    """
    Score a transcript with the deterministic manifest.

    Per (dimension, step): 2 if all applicable checks pass, 1 if at least
    half pass, 0 otherwise; an empty output scores 0. A dimension with no
    checks scores 0 with no steps.
    """
    outputs = {record.step: record.assistant_output for record in transcript.steps}
    scores = []
    for dimension, steps in dimension_steps(manifest).items():
        per_step = {}
        for step in steps:
            text = outputs.get(step, "")
            checks = [c for c in manifest if c.dimension == dimension and c.applies_to(step)]
            if not text.strip():
                per_step[step] = 0
                continue
            passed = sum(1 for c in checks if evaluate_check(c, text, outputs).passed)
            per_step[step] = _raw_score(passed, len(checks))
        scores.append(DimensionScore(dimension, per_step, _aggregate(per_step)))
    return scores


def check_evidence(transcript: Transcript, manifest: Sequence[CheckSpec]) -> List[dict]:
    """Every failed check with its evidence, for reports."""
    outputs = {record.step: record.assistant_output for record in transcript.steps}
    failures = []
    for spec in manifest:
        for step in spec.steps:
            outcome = evaluate_check(spec, outputs.get(step, ""), outputs)
            if not outcome.passed:
                failures.append({
                    "check": spec.id,
                    "dimension": spec.dimension.value,
                    "step": step,
                    "evidence": outcome.evidence,
                })
    return failures


def cumulative_score(
    scores: Iterable[DimensionScore],
    weights: Optional[Mapping[Dimension, float]] = None,
) -> float:
    """
    (sum of w_d * aggregated_d) * 10 / (2 * sum of w_d), computed exactly.

    Raises:
        MissingDimension: a dimension has no score
    """
    weights = weights or DEFAULT_WEIGHTS
    by_dimension = {s.dimension: s for s in scores}
    for dimension in Dimension:
        if dimension not in by_dimension:
            raise MissingDimension(dimension.value)

    numerator = Fraction(0)
    total_weight = Fraction(0)
    for dimension in Dimension:
        w = Fraction(weights[dimension]).limit_denominator(1000)
        numerator += w * Fraction(by_dimension[dimension].aggregated).limit_denominator(10 ** 6)
        total_weight += w
    return float(numerator * 10 / (2 * total_weight))


# -----------------------------------------------------------------------------
# Qualitative Judge
# -----------------------------------------------------------------------------

def _try_parse_json(text: str) -> Optional[dict]:
    text = (text or "").strip()
    if not text:
        return None
    try:
        obj = json.loads(text)
        if isinstance(obj, dict):
            return obj
    except ValueError:
        pass

    # first {...} block
    start, end = text.find("{"), text.rfind("}")
    if start != -1 and end > start:
        try:
            obj = json.loads(text[start:end + 1])
            if isinstance(obj, dict):
                return obj
        except ValueError:
            return None
    return None


def _judge_prompt(transcript: Transcript, dimension: Dimension, steps: Sequence[int]) -> str:
    parts = [
        f"{JUDGE_PREFIX}{dimension.value} ({dimension.title})",
        f"Score 2 when: {RUBRIC_CRITERIA[dimension]}",
        "",
    ]
    for record in transcript.steps:
        parts.append(f"### Step {record.step} output")
        parts.append(record.assistant_output)
        parts.append("")
    parts.append(f"Score steps {', '.join(str(s) for s in steps)}.")
    parts.append('Reply with JSON only: {"scores": {"<step>": 0|1|2}}')
    return "\n".join(parts)


def _judge_scores(parsed: Optional[dict], steps: Sequence[int]) -> Optional[Dict[int, int]]:
    if not parsed or not isinstance(parsed.get("scores"), dict):
        return None
    try:
        scores = {int(k): int(v) for k, v in parsed["scores"].items()}
    except (TypeError, ValueError):
        return None
    if any(step not in scores or scores[step] not in (0, 1, 2) for step in steps):
        return None
    return {step: scores[step] for step in steps}


def judge_qualitative(
    transcript: Transcript,
    dimension: Dimension,
    provider: CompletionProvider,
    steps: Sequence[int],
) -> Dict[int, int]:
    """
    Ask the judge for per-step raw scores on one dimension.

    An unparseable reply is retried once with a stricter instruction.

    Raises:
        JudgeUnavailable: transport failure, or no usable reply after the retry
    """
    prompt = _judge_prompt(transcript, dimension, steps)
    try:
        reply = provider.complete(_JUDGE_SYSTEM, [{"role": "user", "content": prompt}])
        scores = _judge_scores(_try_parse_json(reply.text), steps)
        if scores is not None:
            return scores

        logger.warning(f"Judge reply for {dimension.value} was not valid JSON, retrying once")
        retry = [
            {"role": "user", "content": prompt},
            {"role": "assistant", "content": reply.text},
            {"role": "user", "content": f"{JUDGE_PREFIX}{dimension.value}\nConvert your answer into ONLY the JSON object."},
        ]
        reply = provider.complete(_RETRY_SYSTEM, retry)
    except ProviderError as e:
        raise JudgeUnavailable(f"Judge request for {dimension.value} failed: {e}")

    scores = _judge_scores(_try_parse_json(reply.text), steps)
    if scores is None:
        raise JudgeUnavailable(f"Judge reply for {dimension.value} could not be parsed")
    return scores


def merge_judge(score: DimensionScore, judged: Mapping[int, int]) -> DimensionScore:
    """Per-step minimum: checks can lower a judge score, never raise it."""
    merged = {
        step: min(raw, judged.get(step, raw))
        for step, raw in score.per_step_raw.items()
    }
    return DimensionScore(score.dimension, merged, _aggregate(merged))


def score_transcript(
    transcript: Transcript,
    manifest: Sequence[CheckSpec],
    weights: Optional[Mapping[Dimension, float]] = None,
    judge: Optional[CompletionProvider] = None,
    judge_dimensions: Sequence[Dimension] = (Dimension.E4, Dimension.E6),
) -> RubricResult:
    """
    Full rubric for one transcript.

    A judge failure on one dimension keeps that dimension's deterministic
    score and is listed in judge_fallbacks; the other judgments still
    apply. With no judge, or no successful judgment, the result is flagged
    deterministic_only.
    """
    scores = run_checks(transcript, manifest)
    steps = dimension_steps(manifest)
    unchecked = [d.value for d, s in steps.items() if not s]
    for dimension in unchecked:
        logger.warning(f"Dimension {dimension} has no checks in the manifest; scored 0")

    judged: Dict[Dimension, Dict[int, int]] = {}
    fallbacks: List[str] = []
    if judge is not None:
        for dimension in judge_dimensions:
            if not steps[dimension]:
                continue
            try:
                judged[dimension] = judge_qualitative(transcript, dimension, judge, steps[dimension])
            except JudgeUnavailable as e:
                logger.warning(f"{e}; keeping deterministic {dimension.value} scores")
                fallbacks.append(dimension.value)
        scores = [merge_judge(s, judged[s.dimension]) if s.dimension in judged else s for s in scores]

    return RubricResult(
        scores=scores,
        cumulative=cumulative_score(scores, weights),
        deterministic_only=not judged,
        unchecked=unchecked,
        judge_fallbacks=fallbacks,
    )
