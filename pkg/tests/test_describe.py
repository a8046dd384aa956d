import math

import numpy as np
import pytest

from teamrules.describe import (POST_INSTRUCTION, PRE_INSTRUCTION_CONTRAST,
                                PRE_INSTRUCTION_LEGACY,
                                PRE_INSTRUCTION_NO_CONTRAST,
                                BagOfWordsEmbedder, DescriberConfig,
                                HTTPEmbedder, HTTPLLMClient, KeywordMockLLM,
                                LLMClient, LookupEmbedder, ScriptedLLM,
                                TransportFailure, build_prompt,
                                cosine_similarity, describe_region,
                                find_counterexamples, tokenize)
from teamrules.errors import BackendError, ValidationError
from teamrules.regions import Region, region_members

from conftest import make_dataset, make_example


def lighthouse_vocabulary(n_members=12, n_outside=10):
    vocab = ["lighthouse", "harbor"]
    vocab += [f"cliff{i}" for i in range(n_members)]
    vocab += [f"gull{i}" for i in range(n_outside)]
    return vocab


def planted_token_dataset(n_members=12, n_outside=10):
    """Members all mention the planted token once and a distractor twice; the
    distractor also saturates the outside texts. Embeddings are bag-of-words
    counts so the loop's similarity queries are exactly reproducible."""
    vocab = lighthouse_vocabulary(n_members, n_outside)
    embedder = BagOfWordsEmbedder(vocab)
    examples = []
    for i in range(n_members):
        text = f"lighthouse harbor harbor cliff{i}"
        examples.append(make_example(i, embedder.embed(text), label="a",
                                     human="b", ai="a", text=text))
    for i in range(n_outside):
        text = f"harbor gull{i} harbor"
        examples.append(make_example(n_members + i, embedder.embed(text),
                                     label="a", human="a", ai="b", text=text))
    ds = make_dataset(examples, embedding_dim=len(vocab), vocab=("a", "b"))
    # members sit at scaled distance sqrt(5) from the centroid, outsiders at
    # sqrt(6): radius 2.3 separates them cleanly
    centroid = np.zeros(len(vocab))
    centroid[0] = 1.0
    region = Region(id=0, centroid=centroid, scale=np.ones(len(vocab)),
                    radius=2.3, decision=1)
    return ds, region, embedder


class FlakyLLM(LLMClient):
    """Raises TransportFailure a fixed number of times before each answer."""

    def __init__(self, failures, answer="stub"):
        self.failures = failures
        self.answer = answer
        self.calls = 0
        self.attempts = 0

    def complete(self, prompt):
        self.attempts += 1
        if self.failures > 0:
            self.failures -= 1
            raise TransportFailure("connection reset")
        self.calls += 1
        return self.answer


class TestPromptAssembly:
    def test_recommended_contrast_prompt(self):
        prompt = build_prompt(["a"], ["b"])
        assert prompt == (PRE_INSTRUCTION_CONTRAST
                          + "\ninside the region: \n a, \n . \n not in the region: \nb,\nsummary:")

    def test_no_outside_texts_switch_to_the_single_set_preamble(self):
        prompt = build_prompt(["a"], [])
        assert prompt == (PRE_INSTRUCTION_NO_CONTRAST
                          + "\ninside the region: \n a, \n summary:")

    def test_legacy_style(self):
        prompt = build_prompt(["x"], ["y"], style="legacy")
        assert prompt.startswith(PRE_INSTRUCTION_LEGACY + "\n")
        assert prompt.endswith(POST_INSTRUCTION)

    def test_multiple_texts_keep_their_order_and_separators(self):
        prompt = build_prompt(["one", "two"], ["three", "four"])
        body = prompt[len(PRE_INSTRUCTION_CONTRAST):]
        assert body == ("\ninside the region: \n one, \n two, \n "
                        ". \n not in the region: \nthree,\nfour,\nsummary:")

    def test_preamble_wording_is_stable(self):
        assert "no more than 20 words" in PRE_INSTRUCTION_CONTRAST
        assert "two cows and two sheep grazing in a pasture." in PRE_INSTRUCTION_CONTRAST
        assert "End of Example" in PRE_INSTRUCTION_CONTRAST
        # the single-set preamble keeps its idiosyncratic spacing
        assert "region.Your task" in PRE_INSTRUCTION_NO_CONTRAST
        assert "sentence .Your" in PRE_INSTRUCTION_NO_CONTRAST
        assert "distinguish  points" in PRE_INSTRUCTION_NO_CONTRAST
        assert "should be a single word" in PRE_INSTRUCTION_NO_CONTRAST

    def test_unknown_style_rejected(self):
        with pytest.raises(ValidationError):
            build_prompt(["a"], ["b"], style="verbose")


class TestSimilarity:
    def test_cosine_hand_values(self):
        assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0)
        assert cosine_similarity([1.0, 1.0], [1.0, 1.0]) == pytest.approx(1.0)
        assert cosine_similarity([1.0, 0.0], [1.0, 1.0]) == pytest.approx(1 / math.sqrt(2))
        assert cosine_similarity([1.0, 0.0], [0.0, 0.0]) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            cosine_similarity([1.0], [1.0, 2.0])

    def test_tokenize_lowercases_and_splits(self):
        assert tokenize("Two Cows, two sheep! x9") == ["two", "cows", "two",
                                                       "sheep", "x9"]


class TestCounterexamples:
    def brute_force(self, vector, dataset, member_ids, used_in, used_out):
        plus = None
        minus = None
        for ex in dataset.examples:
            if ex.text is None:
                continue
            sim = cosine_similarity(vector, ex.embedding)
            if ex.id in member_ids and ex.id not in used_in:
                if plus is None or sim < plus[0] or (sim == plus[0] and ex.id < plus[1]):
                    plus = (sim, ex.id)
            if ex.id not in member_ids and ex.id not in used_out:
                if minus is None or sim > minus[0] or (sim == minus[0] and ex.id < minus[1]):
                    minus = (sim, ex.id)
        return (plus and plus[1]), (minus and minus[1])

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(40)
        for _ in range(25):
            n = int(rng.integers(4, 20))
            examples = [make_example(i, rng.normal(size=3),
                                     text=None if rng.random() < 0.2 else f"t{i}")
                        for i in range(n)]
            ds = make_dataset(examples)
            member_ids = {ex.id for ex in examples if rng.random() < 0.5}
            used_in = {ex.id for ex in examples if rng.random() < 0.2}
            used_out = {ex.id for ex in examples if rng.random() < 0.2}
            vector = rng.normal(size=3)
            got = find_counterexamples(vector, ds, member_ids, used_in, used_out)
            assert got == self.brute_force(vector, ds, member_ids, used_in, used_out)

    def test_similarity_ties_resolve_to_lowest_id(self):
        examples = [
            make_example(0, [1.0, 0.0], text="a"),
            make_example(1, [2.0, 0.0], text="b"),  # same direction as ex0
            make_example(2, [1.0, 0.0], text="c"),
            make_example(3, [3.0, 0.0], text="d"),
        ]
        ds = make_dataset(examples)
        members = {"ex0002", "ex0003"}
        plus, minus = find_counterexamples(np.array([1.0, 0.0]), ds, members,
                                           set(), set())
        assert plus == "ex0002"
        assert minus == "ex0000"

    def test_exhausted_sides_return_none(self):
        examples = [make_example(0, [1.0], text="a"), make_example(1, [2.0], text="b")]
        ds = make_dataset(examples)
        plus, minus = find_counterexamples(np.array([1.0]), ds, {"ex0000"},
                                           {"ex0000"}, {"ex0001"})
        assert plus is None and minus is None


class TestDescribeLoop:
    def test_makes_exactly_m_plus_one_calls(self):
        ds, region, embedder = planted_token_dataset()
        for m in (0, 1, 3):
            llm = KeywordMockLLM()
            cfg = DescriberConfig(m=m, seed=0)
            _, trace = describe_region(region, ds, llm, embedder, cfg)
            assert llm.calls == m + 1
            assert trace.llm_calls == m + 1
            assert len(trace.rounds) == m + 1

    def test_recovers_planted_token_for_every_seed(self):
        ds, region, embedder = planted_token_dataset()
        for seed in range(5):
            cfg = DescriberConfig(m=2, seed=seed)
            description, _ = describe_region(region, ds, KeywordMockLLM(),
                                             embedder, cfg)
            assert description == "lighthouse"

    def test_contrast_beats_the_no_contrast_ablation(self):
        ds, region, embedder = planted_token_dataset()
        hits = ablation_hits = 0
        for seed in range(5):
            with_contrast, _ = describe_region(
                region, ds, KeywordMockLLM(), embedder,
                DescriberConfig(m=2, seed=seed))
            without, _ = describe_region(
                region, ds, KeywordMockLLM(), embedder,
                DescriberConfig(m=2, seed=seed, contrast=False))
            hits += int(with_contrast == "lighthouse")
            ablation_hits += int(without == "lighthouse")
        assert hits == 5
        assert ablation_hits == 0  # the distractor wins without contrast
        assert hits >= ablation_hits

    def test_no_contrast_prompts_never_show_outside_texts(self):
        ds, region, embedder = planted_token_dataset()
        cfg = DescriberConfig(m=2, seed=1, contrast=False)
        _, trace = describe_region(region, ds, KeywordMockLLM(), embedder, cfg)
        for row in trace.rounds:
            assert "not in the region:" not in row["prompt"]
            assert row["outside_ids"] == []

    def test_counterexamples_accumulate_across_rounds(self):
        ds, region, embedder = planted_token_dataset(n_members=4, n_outside=6)
        cfg = DescriberConfig(m=2, n_inside=2, n_outside=2, seed=0)
        _, trace = describe_region(region, ds, KeywordMockLLM(), embedder, cfg)
        sizes_in = [len(row["inside_ids"]) for row in trace.rounds]
        sizes_out = [len(row["outside_ids"]) for row in trace.rounds]
        assert sizes_in == [2, 3, 4]
        assert sizes_out == [2, 3, 4]
        for row in trace.rounds[1:]:
            assert "outside_similarity" in row

    def test_trace_is_reproducible(self):
        ds, region, embedder = planted_token_dataset()
        cfg = DescriberConfig(m=2, seed=7)
        _, a = describe_region(region, ds, KeywordMockLLM(), embedder, cfg)
        _, b = describe_region(region, ds, KeywordMockLLM(), embedder, cfg)
        assert a.to_json() == b.to_json()

    def test_seed_changes_the_sampled_texts(self):
        ds, region, embedder = planted_token_dataset()
        cfg_a = DescriberConfig(m=0, n_inside=3, seed=0)
        cfg_b = DescriberConfig(m=0, n_inside=3, seed=1)
        _, a = describe_region(region, ds, KeywordMockLLM(), embedder, cfg_a)
        _, b = describe_region(region, ds, KeywordMockLLM(), embedder, cfg_b)
        assert a.rounds[0]["inside_ids"] != b.rounds[0]["inside_ids"]

    def test_examples_without_text_are_skipped(self):
        ds, region, embedder = planted_token_dataset()
        ds.examples[0].text = None  # a member loses its text
        cfg = DescriberConfig(m=1, seed=0)
        _, trace = describe_region(region, ds, KeywordMockLLM(), embedder, cfg)
        assert "ex0000" not in trace.rounds[0]["inside_ids"]

    def test_region_with_no_texts_is_refused(self):
        ds, region, embedder = planted_token_dataset(n_members=3)
        for i in range(3):
            ds.examples[i].text = None
        with pytest.raises(ValidationError):
            describe_region(region, ds, KeywordMockLLM(), embedder,
                            DescriberConfig(m=0))

    def test_embedder_dimension_mismatch_is_refused_when_refining(self):
        ds, region, _ = planted_token_dataset()
        wrong = BagOfWordsEmbedder(["lighthouse", "harbor"])
        with pytest.raises(ValidationError):
            describe_region(region, ds, KeywordMockLLM(), wrong,
                            DescriberConfig(m=1))
        # without refinement rounds the embedder is never touched
        description, _ = describe_region(region, ds, KeywordMockLLM(), wrong,
                                         DescriberConfig(m=0))
        assert description
        describe_region(region, ds, KeywordMockLLM(), None, DescriberConfig(m=0))

    def test_missing_embedder_with_rounds_is_refused(self):
        ds, region, _ = planted_token_dataset()
        with pytest.raises(ValidationError):
            describe_region(region, ds, KeywordMockLLM(), None, DescriberConfig(m=2))


class TestRetries:
    def test_transient_failures_are_retried_with_exponential_backoff(self):
        ds, region, embedder = planted_token_dataset()
        llm = FlakyLLM(failures=2, answer="stub")
        naps = []
        cfg = DescriberConfig(m=0, max_retries=3, backoff=0.5)
        description, trace = describe_region(region, ds, llm, embedder, cfg,
                                             sleep=naps.append)
        assert description == "stub"
        assert llm.attempts == 3
        assert naps == [0.5, 1.0]
        assert trace.llm_calls == 1

    def test_exhausted_retries_raise_with_the_partial_trace(self):
        ds, region, embedder = planted_token_dataset()
        llm = FlakyLLM(failures=99)
        cfg = DescriberConfig(m=1, max_retries=3, backoff=0.0)
        with pytest.raises(BackendError) as err:
            describe_region(region, ds, llm, embedder, cfg, sleep=lambda _: None)
        assert llm.attempts == 4  # one try plus three retries
        assert not isinstance(err.value, TransportFailure)
        assert err.value.trace is not None
        assert err.value.trace.llm_calls == 0

    def test_partial_trace_keeps_completed_rounds(self):
        ds, region, embedder = planted_token_dataset()

        class DiesOnSecondCall(LLMClient):
            def __init__(self):
                self.calls = 0

            def complete(self, prompt):
                if self.calls >= 1:
                    raise TransportFailure("gone")
                self.calls += 1
                return "first answer"

        cfg = DescriberConfig(m=1, max_retries=1, backoff=0.0)
        with pytest.raises(BackendError) as err:
            describe_region(region, ds, DiesOnSecondCall(), embedder, cfg,
                            sleep=lambda _: None)
        trace = err.value.trace
        assert trace.llm_calls == 1
        assert trace.rounds[0]["response"] == "first answer"


class TestBackends:
    def test_scripted_llm_replays_in_order_and_exhausts(self):
        llm = ScriptedLLM(["one", "two"])
        assert llm.complete("p") == "one"
        assert llm.complete("p") == "two"
        with pytest.raises(BackendError):
            llm.complete("p")

    def test_scripted_fixture_accepts_list_or_indexed_map(self, tmp_path):
        import json
        as_list = tmp_path / "list.json"
        as_list.write_text(json.dumps(["a", "b"]))
        as_map = tmp_path / "map.json"
        as_map.write_text(json.dumps({"1": "b", "0": "a", "10": "c"}))
        assert ScriptedLLM.from_fixture(as_list).responses == ["a", "b"]
        assert ScriptedLLM.from_fixture(as_map).responses == ["a", "b", "c"]

    def test_lookup_embedder(self, tmp_path):
        import json
        path = tmp_path / "vectors.json"
        path.write_text(json.dumps({"hello": [1.0, 0.0], "bye": [0.0, 2.0]}))
        emb = LookupEmbedder.from_fixture(path)
        assert emb.dim == 2
        assert emb.embed("hello").tolist() == [1.0, 0.0]
        with pytest.raises(BackendError):
            emb.embed("unseen")

    def test_lookup_embedder_rejects_ragged_tables(self):
        with pytest.raises(ValidationError):
            LookupEmbedder({"a": [1.0], "b": [1.0, 2.0]})

    def test_bag_of_words_counts_in_vocabulary_order(self):
        emb = BagOfWordsEmbedder(["sheep", "cow"])
        assert emb.embed("a cow, a sheep and a COW").tolist() == [1.0, 2.0]
        assert emb.embed("nothing relevant").tolist() == [0.0, 0.0]

    def test_keyword_mock_bans_outside_tokens(self):
        llm = KeywordMockLLM()
        prompt = build_prompt(["red fox", "red wolf"], ["red rock"])
        assert llm.complete(prompt) == "fox"  # red is banned, fox < wolf

    def test_describer_config_validation(self):
        with pytest.raises(ValidationError):
            DescriberConfig(m=-1).validate()
        with pytest.raises(ValidationError):
            DescriberConfig(n_inside=0).validate()
        with pytest.raises(ValidationError):
            DescriberConfig(prompt_style="haiku").validate()
        with pytest.raises(ValidationError):
            DescriberConfig.from_dict({"m": 1, "mystery": 2})


class _FakeResponse:
    def __init__(self, status_code, body):
        self.status_code = status_code
        self._body = body

    def json(self):
        return self._body


def _capture_post(monkeypatch, response):
    """Replace httpx.post with a recorder returning a canned response."""
    import httpx

    seen = {}

    def fake_post(url, json=None, headers=None, timeout=None):
        if isinstance(response, Exception):
            raise response
        seen.update(url=url, json=json, headers=headers, timeout=timeout)
        return response

    monkeypatch.setattr(httpx, "post", fake_post)
    return seen


class TestHTTPWireFormat:
    def test_completion_posts_chat_messages_at_temperature_zero(self, monkeypatch):
        monkeypatch.setenv("TR_TOKEN", "sekrit")
        seen = _capture_post(monkeypatch, _FakeResponse(200, {
            "choices": [{"message": {"content": "a summary"}}]}))
        client = HTTPLLMClient("http://llm.local/v1/chat", model="m1",
                               auth_env="TR_TOKEN")
        assert client.complete("the prompt") == "a summary"
        assert seen["json"] == {
            "model": "m1",
            "messages": [{"role": "user", "content": "the prompt"}],
            "temperature": 0,
        }
        assert seen["headers"]["authorization"] == "Bearer sekrit"
        assert client.calls == 1

    def test_completion_reads_plain_text_choice(self, monkeypatch):
        _capture_post(monkeypatch, _FakeResponse(200, {"choices": [{"text": "alt"}]}))
        assert HTTPLLMClient("http://llm.local").complete("p") == "alt"

    def test_completion_server_error_is_retryable(self, monkeypatch):
        _capture_post(monkeypatch, _FakeResponse(503, {}))
        with pytest.raises(TransportFailure):
            HTTPLLMClient("http://llm.local").complete("p")

    def test_completion_client_error_is_not_retryable(self, monkeypatch):
        _capture_post(monkeypatch, _FakeResponse(404, {}))
        with pytest.raises(BackendError) as err:
            HTTPLLMClient("http://llm.local").complete("p")
        assert not isinstance(err.value, TransportFailure)

    def test_completion_rejects_malformed_body(self, monkeypatch):
        _capture_post(monkeypatch, _FakeResponse(200, {"choices": []}))
        with pytest.raises(BackendError):
            HTTPLLMClient("http://llm.local").complete("p")

    def test_completion_connect_failure_is_transport(self, monkeypatch):
        import httpx
        _capture_post(monkeypatch, httpx.ConnectError("refused"))
        with pytest.raises(TransportFailure):
            HTTPLLMClient("http://llm.local").complete("p")

    def test_embedder_posts_texts_and_reads_vectors(self, monkeypatch):
        seen = _capture_post(monkeypatch, _FakeResponse(200, {
            "vectors": [[1.0, 2.0, 3.0]]}))
        emb = HTTPEmbedder("http://emb.local", dim=3)
        assert emb.embed("hello").tolist() == [1.0, 2.0, 3.0]
        assert seen["json"] == {"texts": ["hello"]}

    def test_embedder_checks_dimension(self, monkeypatch):
        _capture_post(monkeypatch, _FakeResponse(200, {"vectors": [[1.0, 2.0]]}))
        with pytest.raises(BackendError):
            HTTPEmbedder("http://emb.local", dim=3).embed("hello")

    def test_embedder_connect_failure_is_transport(self, monkeypatch):
        import httpx
        _capture_post(monkeypatch, httpx.ConnectError("refused"))
        with pytest.raises(TransportFailure):
            HTTPEmbedder("http://emb.local", dim=3).embed("hello")


class TestWordLimit:
    def test_limit_is_substituted_into_the_contrast_preamble(self):
        prompt = build_prompt(["a"], ["b"], word_limit=12)
        assert "no more than 12 words" in prompt
        assert "20 words" not in prompt

    def test_default_limit_is_twenty(self):
        assert "no more than 20 words" in build_prompt(["a"], ["b"])

    def test_no_contrast_preamble_ignores_the_limit(self):
        assert build_prompt(["a"], [], word_limit=7) == build_prompt(["a"], [])

    def test_zero_limit_rejected(self):
        with pytest.raises(ValidationError):
            build_prompt(["a"], ["b"], word_limit=0)
        with pytest.raises(ValidationError):
            DescriberConfig(word_limit=0).validate()

    def test_config_limit_reaches_the_prompt(self):
        ds, region, embedder = planted_token_dataset()
        cfg = DescriberConfig(m=0, word_limit=9, seed=3)
        _, trace = describe_region(region, ds, KeywordMockLLM(), embedder, cfg)
        assert "no more than 9 words" in trace.rounds[0]["prompt"]
