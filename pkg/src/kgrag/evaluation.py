"""Answer quality metrics and the acceptance gate.

Two judge-free metrics score the answer against the retrieved context as
a summarization task (token-level greedy matching and embedding cosine);
three judge-based metrics use a chat client with strict line-delimited
output formats, parsed leniently. Unparseable verdict lines count
against the answer, keeping faithfulness and completeness conservative.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from .embedding import cosine
from .errors import (
    ClientUnreachable,
    EmptyCompletion,
    EmptyTokenization,
    JudgeUnreachable,
    UnexpectedPrompt,
)

logger = logging.getLogger(__name__)

METRIC_NAMES = (
    "faithfulness",
    "completeness",
    "relevance",
    "bertscore_f1",
    "cosine_similarity",
)


@dataclass
class EvaluationScores:
    faithfulness: float
    completeness: float
    relevance: float
    bertscore_f1: float  # clamped to [0, 1] for reporting
    cosine_similarity: float
    claim_count: int
    accepted: bool

    def as_dict(self) -> dict:
        return {
            "faithfulness": self.faithfulness,
            "completeness": self.completeness,
            "relevance": self.relevance,
            "bertscore_f1": self.bertscore_f1,
            "cosine_similarity": self.cosine_similarity,
            "claim_count": self.claim_count,
            "accepted": self.accepted,
        }


CLAIM_DECOMPOSE_PROMPT = """Split the answer below into short atomic factual claims.
Respond with one line per claim, each formatted exactly as:
CLAIM: <claim text>

Answer:
{answer}
"""

CLAIM_VERIFY_PROMPT = """Decide for each numbered claim whether the context supports it.
Respond with one line per claim, in the same order, each formatted exactly as:
VERDICT: supported
or
VERDICT: unsupported

Context:
{context}

Claims:
{claims}
"""

STATEMENT_LIST_PROMPT = """List the statements from the context that are relevant to answering the question.
Respond with one line per statement, each formatted exactly as:
STATEMENT: <statement text>

Question:
{question}

Context:
{context}
"""

STATEMENT_REFLECT_PROMPT = """Decide for each numbered statement whether it is reflected in the answer.
Respond with one line per statement, in the same order, each formatted exactly as:
VERDICT: reflected
or
VERDICT: missing

Answer:
{answer}

Statements:
{statements}
"""

QUESTION_GEN_PROMPT = """Write {n} different questions for which the answer below would be a valid response.
Respond with one line per question, each formatted exactly as:
QUESTION: <question text>

Answer:
{answer}
"""

_CLAIM_LINE = re.compile(r"^\s*claim\s*:\s*(.+?)\s*$", re.IGNORECASE)
_STATEMENT_LINE = re.compile(r"^\s*statement\s*:\s*(.+?)\s*$", re.IGNORECASE)
_QUESTION_LINE = re.compile(r"^\s*question\s*:\s*(.+?)\s*$", re.IGNORECASE)
_VERDICT_LINE = re.compile(r"^\s*verdict\s*:\s*(\S+)\s*$", re.IGNORECASE)


def _ask_judge(judge, prompt: str) -> str:
    try:
        return judge.complete(prompt).text
    except (ClientUnreachable, EmptyCompletion, UnexpectedPrompt) as exc:
        raise JudgeUnreachable(str(exc)) from exc


def _parse_tagged(text: str, pattern: re.Pattern) -> list[str]:
    return [m.group(1) for line in text.splitlines() if (m := pattern.match(line))]


def _parse_verdicts(text: str, expected: int, positive: str) -> list[bool]:
    """One boolean per expected line; missing or unparseable lines are False."""
    verdicts = []
    for line in text.splitlines():
        m = _VERDICT_LINE.match(line)
        if m:
            verdicts.append(m.group(1).casefold() == positive)
    verdicts = verdicts[:expected]
    verdicts += [False] * (expected - len(verdicts))
    return verdicts


def _numbered(items: list[str]) -> str:
    return "\n".join(f"{i}. {item}" for i, item in enumerate(items, start=1))


def decompose_claims(judge, answer: str) -> list[str]:
    return _parse_tagged(_ask_judge(judge, CLAIM_DECOMPOSE_PROMPT.format(answer=answer)), _CLAIM_LINE)


def faithfulness(judge, answer: str, context: str) -> tuple[float, int]:
    """Fraction of the answer's atomic claims the context supports.

    Returns (score, claim_count); an answer that decomposes into zero
    claims scores 0.0 and is flagged as degenerate in the log.
    """
    if not answer.strip():
        raise ValueError("answer must be non-empty")
    claims = decompose_claims(judge, answer)
    if not claims:
        logger.warning("degenerate faithfulness: judge extracted zero claims")
        return 0.0, 0
    reply = _ask_judge(
        judge, CLAIM_VERIFY_PROMPT.format(context=context, claims=_numbered(claims))
    )
    verdicts = _parse_verdicts(reply, len(claims), "supported")
    return sum(verdicts) / len(claims), len(claims)


def completeness(judge, question: str, context: str, answer: str) -> float:
    """Fraction of question-relevant context statements reflected in the answer.

    Vacuously 1.0 (with a logged flag) when the judge finds no relevant
    statements in the context.
    """
    statements = _parse_tagged(
        _ask_judge(judge, STATEMENT_LIST_PROMPT.format(question=question, context=context)),
        _STATEMENT_LINE,
    )
    if not statements:
        logger.warning("degenerate completeness: no relevant context statements; scoring 1.0")
        return 1.0
    reply = _ask_judge(
        judge,
        STATEMENT_REFLECT_PROMPT.format(answer=answer, statements=_numbered(statements)),
    )
    verdicts = _parse_verdicts(reply, len(statements), "reflected")
    return sum(verdicts) / len(statements)


def relevance(judge, embed_provider, question: str, answer: str, n_questions: int = 3) -> float:
    """Similarity between the question and questions reverse-generated from the answer.

    The judge proposes ``n_questions`` questions the answer would answer;
    the score is the mean cosine between each proposal and the original
    question, clamped to [0, 1].
    """
    if n_questions < 1:
        raise ValueError("n_questions must be >= 1")
    reply = _ask_judge(judge, QUESTION_GEN_PROMPT.format(n=n_questions, answer=answer))
    generated = _parse_tagged(reply, _QUESTION_LINE)
    if not generated:
        logger.warning("degenerate relevance: judge generated zero questions; scoring 0.0")
        return 0.0
    question_vec = embed_provider.embed(question)
    sims = [cosine(question_vec, embed_provider.embed(g)) for g in generated]
    return max(0.0, min(1.0, sum(sims) / len(sims)))


def tokenize(text: str) -> list[str]:
    """Lowercase whitespace-and-punctuation split."""
    return re.findall(r"\w+", text.lower())


def bertscore(token_embedder, candidate: str, reference: str) -> tuple[float, float, float]:
    """Greedy token-matching similarity (precision, recall, f1).

    Precision is the mean over candidate tokens of the maximum cosine to
    any reference token; recall is symmetric; f1 is their harmonic mean
    (0 when both vanish).
    """
    cand_tokens = tokenize(candidate)
    ref_tokens = tokenize(reference)
    if not cand_tokens or not ref_tokens:
        raise EmptyTokenization("both texts must tokenize to at least one token")
    cand_vecs = [token_embedder.embed(t) for t in cand_tokens]
    ref_vecs = [token_embedder.embed(t) for t in ref_tokens]
    sims = [[cosine(cv, rv) for rv in ref_vecs] for cv in cand_vecs]
    precision = sum(max(row) for row in sims) / len(cand_vecs)
    recall = sum(max(sims[i][j] for i in range(len(cand_vecs))) for j in range(len(ref_vecs))) / len(
        ref_vecs
    )
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def answer_context_cosine(embed_provider, answer: str, context: str) -> float:
    return cosine(embed_provider.embed(answer), embed_provider.embed(context))


def gate(
    scores: EvaluationScores,
    threshold_faithfulness: float = 0.8,
    threshold_completeness: float = 0.8,
) -> bool:
    """Accept iff faithfulness and completeness both reach their thresholds (inclusive)."""
    return (
        scores.faithfulness >= threshold_faithfulness
        and scores.completeness >= threshold_completeness
    )


def evaluate_answer(
    judge,
    embed_provider,
    question: str,
    answer: str,
    context: str,
    threshold_faithfulness: float = 0.8,
    threshold_completeness: float = 0.8,
    relevance_n_questions: int = 3,
) -> EvaluationScores:
    """Run the full metric suite over one answer and apply the gate."""
    faith, claim_count = faithfulness(judge, answer, context)
    complete = completeness(judge, question, context, answer)
    relev = relevance(judge, embed_provider, question, answer, relevance_n_questions)
    try:
        _, _, f1 = bertscore(embed_provider, answer, context)
    except EmptyTokenization:
        logger.warning("degenerate bertscore: empty tokenization; scoring 0.0")
        f1 = 0.0
    f1 = max(0.0, min(1.0, f1))
    sim = answer_context_cosine(embed_provider, answer, context)
    scores = EvaluationScores(
        faithfulness=faith,
        completeness=complete,
        relevance=relev,
        bertscore_f1=f1,
        cosine_similarity=sim,
        claim_count=claim_count,
        accepted=False,
    )
    scores.accepted = gate(scores, threshold_faithfulness, threshold_completeness)
    return scores
