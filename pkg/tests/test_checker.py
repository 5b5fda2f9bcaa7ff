"""Checker: prompts, label parsing, chunking, aggregation, response driver."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from claimcheck.backend import BackendUnreachableError, NliResult, UnknownBackendError
from claimcheck.checker import (
    AllCallsFailedError,
    CheckerKind,
    ClaimsMissingError,
    ClaimVerdict,
    EmptyReferenceError,
    PromptedLLMChecker,
    RemoteNLIChecker,
    build_checker,
    chunk_aggregate,
    parse_label,
    render_check_prompt,
    split_reference,
)
from claimcheck.core import (
    BenchmarkExample,
    ClaimTriplet,
    ContextSetting,
    EmptyLabelSetError,
    HallucinationLabel,
    ResponseRecord,
    severity_max,
)

E = HallucinationLabel.ENTAILMENT
N = HallucinationLabel.NEUTRAL
C = HallucinationLabel.CONTRADICTION

CLAIM = ClaimTriplet("A", "is", "B")


class TestRenderCheckPrompt:
    def test_deterministic(self):
        assert render_check_prompt(CLAIM, "A is B.") == render_check_prompt(CLAIM, "A is B.")

    def test_contains_claim_and_reference_verbatim(self):
        prompt = render_check_prompt(CLAIM, "A is B.")
        assert "A is B." in prompt
        assert "A is B" in prompt

    def test_empty_reference_raises(self):
        with pytest.raises(EmptyReferenceError):
            render_check_prompt(CLAIM, "   ")


class TestParseLabel:
    def test_exact_word(self):
        assert parse_label("Entailment") is E

    def test_embedded_match(self):
        assert parse_label("The answer is: contradiction.") is C

    def test_ambiguous_is_failure(self):
        assert parse_label("Entailment or Neutral") is None

    def test_no_label_is_failure(self):
        assert parse_label("I cannot tell.") is None

    def test_repeated_single_label_ok(self):
        assert parse_label("neutral. Yes, Neutral.") is N

    def test_word_boundary_respected(self):
        assert parse_label("the response shows neutrality") is None

    def test_case_insensitive(self):
        assert parse_label("ENTAILMENT") is E


class TestSplitReference:
    def test_under_limit_single_chunk(self):
        text = "one two three four five six seven eight nine ten."
        assert split_reference(text, 200) == [text]

    def test_three_equal_sentences(self):
        sentences = []
        for s in range(3):
            words = [f"w{s}_{i}" for i in range(149)] + [f"w{s}_149."]
            sentences.append(" ".join(words))
        text = " ".join(sentences)
        chunks = split_reference(text, 200)
        assert len(chunks) == 3
        assert [len(c.split()) for c in chunks] == [150, 150, 150]
        assert all(chunk.split()[-1].endswith(".") for chunk in chunks)

    def test_empty_reference(self):
        assert split_reference("", 200) == []
        assert split_reference("   \n\t ", 200) == []

    def test_chunk_size_floor(self):
        with pytest.raises(ValueError):
            split_reference("some text", 15)
        assert split_reference("some text", 16) == ["some text"]

    def test_no_boundary_hard_cut(self):
        words = [f"w{i}" for i in range(40)]
        chunks = split_reference(" ".join(words), 16)
        assert [len(c.split()) for c in chunks] == [16, 16, 8]

    def test_words_conserved_random(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            n_words = int(rng.integers(0, 300))
            words = []
            for i in range(n_words):
                word = f"t{i}"
                if rng.random() < 0.15:
                    word += "."
                words.append(word)
            text = " ".join(words)
            size = int(rng.integers(16, 120))
            chunks = split_reference(text, size)
            assert " ".join(chunks).split() == words
            assert all(1 <= len(c.split()) <= size for c in chunks)

    def test_boundary_with_closing_quote(self):
        words = ['say "hi."'] * 10 + ["tail"] * 10
        text = " ".join(words)
        chunks = split_reference(text, 16)
        # the cut lands after a quote-closed sentence end, not mid-window
        assert chunks[0].split()[-1] == '"hi."'


class TestChunkAggregate:
    def test_any_entailment_wins(self):
        assert chunk_aggregate([N, C, E]) is E

    def test_contradiction_beats_neutral(self):
        assert chunk_aggregate([N, C, N]) is C

    def test_all_neutral(self):
        assert chunk_aggregate([N, N]) is N

    def test_empty_raises(self):
        with pytest.raises(EmptyLabelSetError):
            chunk_aggregate([])

    def test_differs_from_severity_max(self):
        # the two aggregation orders are intentionally opposite
        labels = [E, C]
        assert chunk_aggregate(labels) is E
        assert severity_max(labels) is C

    def test_permutation_and_duplication_invariance(self):
        for labels in itertools.product((E, N, C), repeat=3):
            expected = chunk_aggregate(list(labels))
            for perm in itertools.permutations(labels):
                assert chunk_aggregate(list(perm)) is expected
            assert chunk_aggregate(list(labels) * 2) is expected


class TestClaimVerdictInvariant:
    def test_label_must_match_aggregate(self):
        ClaimVerdict(CLAIM, E, per_chunk_labels=(N, E))
        with pytest.raises(ValueError):
            ClaimVerdict(CLAIM, N, per_chunk_labels=(N, E))


class FakeLLMClient:
    """Scripted complete() backend: one reply per call, in order."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.prompts = []

    def complete(self, backend_id, prompt, max_tokens, temperature):
        self.prompts.append(prompt)
        reply = self.replies.pop(0)
        if isinstance(reply, Exception):
            raise reply
        return reply


class FakeNliClient:
    def __init__(self, replies):
        self.replies = list(replies)
        self.pairs = []

    def classify_nli(self, backend_id, premise, hypothesis):
        self.pairs.append((premise, hypothesis))
        reply = self.replies.pop(0)
        if isinstance(reply, Exception):
            raise reply
        label, scores = reply
        return NliResult(HallucinationLabel(label), tuple(scores))


class TestPromptedLLMChecker:
    def test_single_passage(self):
        checker = PromptedLLMChecker(FakeLLMClient(["Entailment"]), "llm")
        verdict = checker.check_claim(CLAIM, ["A is B."])
        assert verdict.label is E
        assert verdict.per_chunk_labels == (E,)
        assert verdict.parse_failures == 0

    def test_multi_passage_evidence_rule(self):
        checker = PromptedLLMChecker(FakeLLMClient(["neutral", "contradiction"]), "llm")
        verdict = checker.check_claim(CLAIM, ["passage one", "passage two"])
        assert verdict.label is C
        assert verdict.per_chunk_labels == (N, C)

    def test_unparseable_falls_back_and_counts(self):
        checker = PromptedLLMChecker(FakeLLMClient(["gibberish"]), "llm")
        verdict = checker.check_claim(CLAIM, ["ref"])
        assert verdict.label is N
        assert verdict.parse_failures == 1

    def test_configurable_fallback(self):
        checker = PromptedLLMChecker(FakeLLMClient(["??"]), "llm", fallback_label=C)
        assert checker.check_claim(CLAIM, ["ref"]).label is C

    def test_partial_backend_failure_tolerated(self):
        replies = [BackendUnreachableError("down"), "entailment"]
        checker = PromptedLLMChecker(FakeLLMClient(replies), "llm")
        verdict = checker.check_claim(CLAIM, ["p1", "p2"])
        assert verdict.label is E
        assert verdict.per_chunk_labels == (E,)

    def test_all_calls_failed(self):
        replies = [BackendUnreachableError("down"), BackendUnreachableError("down")]
        checker = PromptedLLMChecker(FakeLLMClient(replies), "llm")
        with pytest.raises(AllCallsFailedError):
            checker.check_claim(CLAIM, ["p1", "p2"])

    def test_unknown_backend_propagates(self):
        checker = PromptedLLMChecker(FakeLLMClient([UnknownBackendError("x")]), "llm")
        with pytest.raises(UnknownBackendError):
            checker.check_claim(CLAIM, ["p1"])

    def test_no_usable_reference(self):
        checker = PromptedLLMChecker(FakeLLMClient([]), "llm")
        with pytest.raises(EmptyReferenceError):
            checker.check_claim(CLAIM, ["", "   "])


class TestRemoteNLIChecker:
    def test_single_chunk_entailment(self):
        client = FakeNliClient([("entailment", (0.9, 0.05, 0.05))])
        checker = RemoteNLIChecker(client, "nli", chunk_size_tokens=200)
        verdict = checker.check_claim(CLAIM, ["A is B."])
        assert verdict.label is E
        assert client.pairs == [("A is B.", "A is B")]

    def test_chunks_across_passages(self):
        client = FakeNliClient(
            [("neutral", (0.1, 0.8, 0.1))] * 3 + [("contradiction", (0.1, 0.1, 0.8))]
        )
        checker = RemoteNLIChecker(client, "nli", chunk_size_tokens=16)
        long_passage = " ".join(f"w{i}" for i in range(40))  # 3 chunks of <=16
        verdict = checker.check_claim(CLAIM, [long_passage, "short passage"])
        assert len(client.pairs) == 4
        assert verdict.label is C
        assert verdict.per_chunk_labels == (N, N, N, C)

    def test_all_nli_calls_failed(self):
        client = FakeNliClient([BackendUnreachableError("down")])
        checker = RemoteNLIChecker(client, "nli")
        with pytest.raises(AllCallsFailedError):
            checker.check_claim(CLAIM, ["ref text"])

    def test_chunk_size_validated(self):
        with pytest.raises(ValueError):
            RemoteNLIChecker(FakeNliClient([]), "nli", chunk_size_tokens=8)


def example_for(record, references=("ref text",), setting=ContextSetting.NOISY):
    return BenchmarkExample(record.example_id, setting, "q?", tuple(references))


class TestCheckResponse:
    def test_alignment(self):
        claims = (
            ClaimTriplet("a", "is", "x"),
            ClaimTriplet("b", "is", "y"),
            ClaimTriplet("c", "is", "z"),
        )
        record = ResponseRecord("r1", "q1", "m", "text", claims=claims)
        checker = PromptedLLMChecker(
            FakeLLMClient(["entailment", "neutral", "contradiction"]), "llm"
        )
        checked = checker.check_response(record, example_for(record))
        assert checked.verdicts == (E, N, C)

    def test_abstained_passthrough(self):
        record = ResponseRecord("r1", "q1", "m", "text", claims=())
        checker = PromptedLLMChecker(FakeLLMClient([]), "llm")
        checked = checker.check_response(record, example_for(record))
        assert checked.verdicts == ()
        assert checked.abstained

    def test_claims_missing(self):
        record = ResponseRecord("r1", "q1", "m", "text")
        checker = PromptedLLMChecker(FakeLLMClient([]), "llm")
        with pytest.raises(ClaimsMissingError):
            checker.check_response(record, example_for(record))

    def test_example_mismatch_rejected(self):
        record = ResponseRecord("r1", "q1", "m", "text", claims=())
        other = BenchmarkExample("q2", ContextSetting.NOISY, "q?", ("ref",))
        checker = PromptedLLMChecker(FakeLLMClient([]), "llm")
        with pytest.raises(ValueError):
            checker.check_response(record, other)

    def test_detailed_returns_verdicts(self):
        record = ResponseRecord(
            "r1", "q1", "m", "text", claims=(ClaimTriplet("a", "is", "x"),)
        )
        checker = PromptedLLMChecker(FakeLLMClient(["hmm entailment"]), "llm")
        checked, verdicts = checker.check_response_detailed(record, example_for(record))
        assert checked.verdicts == (E,)
        assert verdicts[0].raw_checker_output == "hmm entailment"


class TestBuildChecker:
    def test_kinds(self):
        assert isinstance(build_checker("prompted_llm", None, "b"), PromptedLLMChecker)
        assert isinstance(build_checker("remote_nli", None, "b"), RemoteNLIChecker)

    def test_repc_is_not_a_live_checker(self):
        with pytest.raises(ValueError, match="repc-predict"):
            build_checker(CheckerKind.REPC, None, "b")
