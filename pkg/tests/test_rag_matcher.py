from pathlib import Path

import pytest

from app.core.api_corpus import chunk_profile
from app.core.embeddings import EmbeddingVector, HashingEmbeddingProvider, cosine_similarity, embed
from app.core.errors import IncompatibleVectorsError, NoCandidatesError
from app.core.rag_matcher import (
    TIE_PRECISION,
    ApiIndex,
    build_index,
    match_subtask,
    rank_scores,
    ranking_to_json,
    write_golden_ranking,
)

GOLDEN_DIR = Path(__file__).parent / "golden"

CURATED_SUITE = [
    ("robot", "Move the robot to shelf number three.", "move_to_shelf"),
    ("robot", "Identify the vacancy positions on shelf two.", "identify_vacancy_by_shelf"),
    ("robot", "Scan the shelf for vacancy.", "identify_vacancy_by_shelf"),
    ("robot", "Report the battery level and location of the robot.", "get_status"),
    ("robot", "Capture a photo with the camera.", "capture_image"),
    ("robot", "Take an image with the onboard camera using an exposure of 10 milliseconds.", "capture_image"),
    ("robot", "Drive back to the charging base and dock.", "return_to_base"),
    ("robot", "Navigate the robot to coordinates x and y on the warehouse floor.", "move_to_coordinates"),
    ("robot", "What is the battery activity status?", "get_status"),
    ("robot", "Move to shelf one.", "move_to_shelf"),
    ("wifi_sdr", "Searches nearby WiFi access points.", "get_known_aps"),
    ("wifi_sdr", "Return the current link metrics.", "get_link_metrics"),
    ("wifi_sdr", "Report the packet error rate and airtime share.", "get_link_metrics"),
    ("wifi_sdr", "Sense the radio channel for interference.", "sense_channel"),
    ("wifi_sdr", "Set the contention window with CW min and CW max.", "set_contention_window"),
    ("wifi_sdr", "Switch the WiFi connection to the 5 GHz frequency band.", "switch_band"),
    ("wifi_sdr", "Open a driver session.", "open_session"),
    ("wifi_sdr", "Release the driver session and flush the log.", "close_session"),
    ("wifi_sdr", "Is interference detected on the channel?", "sense_channel"),
    ("wifi_sdr", "Change the band to 5 GHz.", "switch_band"),
]


@pytest.fixture
def indexes(provider, robot_profile, wifi_sdr_profile, wifi_commercial_profile):
    return {
        "robot": build_index(chunk_profile(robot_profile), provider),
        "wifi_sdr": build_index(chunk_profile(wifi_sdr_profile), provider),
        "wifi_commercial": build_index(chunk_profile(wifi_commercial_profile), provider),
    }


class TestMatching:
    def test_move_to_shelf(self, indexes, provider):
        result = match_subtask("Move to shelf one", indexes["robot"], provider)
        assert result.best.name == "move_to_shelf"
        assert result.score == result.ranking[0][1]

    def test_identify_vacancy(self, indexes, provider):
        result = match_subtask("Identify the vacancy in shelf one", indexes["robot"], provider)
        assert result.best.name == "identify_vacancy_by_shelf"

    def test_ranking_covers_every_function(self, indexes, provider, robot_profile):
        result = match_subtask("Move to shelf one", indexes["robot"], provider)
        assert sorted(name for name, _ in result.ranking) == sorted(f.name for f in robot_profile.functions)
        scores = [score for _, score in result.ranking]
        assert scores == sorted(scores, reverse=True)

    def test_curated_suite(self, indexes, provider):
        hits = [
            match_subtask(text, indexes[corpus], provider).best.name == expected
            for corpus, text, expected in CURATED_SUITE
        ]
        assert sum(hits) >= 19

    def test_contention_window_subtask(self, indexes, provider):
        result = match_subtask(
            "Set the contention window to log_CW_min 8 and log_CW_max 12.", indexes["wifi_sdr"], provider
        )
        assert result.best.name == "set_contention_window"

    def test_band_switch_subtask_on_both_clients(self, indexes, provider):
        for corpus in ("wifi_sdr", "wifi_commercial"):
            result = match_subtask("Switch to the 5 GHz band.", indexes[corpus], provider)
            assert result.best.name == "switch_band"

    def test_empty_index(self, provider):
        with pytest.raises(NoCandidatesError):
            match_subtask("anything", build_index([], provider), provider)

    def test_threshold_rejects_weak_match(self, indexes, provider):
        with pytest.raises(NoCandidatesError):
            match_subtask("qwzx flrm", indexes["robot"], provider, min_score=0.3)

    def test_provider_mismatch(self, indexes):
        with pytest.raises(IncompatibleVectorsError):
            match_subtask("Move to shelf one", indexes["robot"], HashingEmbeddingProvider(dim=128))


class TestTieBreaking:
    def test_equal_scores_order_by_name(self):
        ranked = rank_scores([("switch_band", 0.5), ("get_known_aps", 0.5), ("sense_channel", 0.7)])
        assert [name for name, _ in ranked] == ["sense_channel", "get_known_aps", "switch_band"]

    def test_scores_equal_beyond_precision_are_ties(self):
        ranked = rank_scores([("b", 0.5 + 1e-15), ("a", 0.5)])
        assert [name for name, _ in ranked] == ["a", "b"]

    def test_scores_equal_at_six_decimals_are_ties(self):
        ranked = rank_scores([("b", 0.5 + 1e-8), ("a", 0.5), ("c", 0.5 + 1e-5)])
        assert [name for name, _ in ranked] == ["c", "a", "b"]


SAMPLE_TEXTS = [
    "Move to shelf one",
    "Identify the vacancy in shelf one",
    "Report the battery level and location of the robot.",
    "List the known WiFi access points nearby.",
    "Set the contention window with CW min and CW max.",
    "Switch to the 5 GHz band.",
    "qwzx flrm",
    "",
]


def scaled(index, factor):
    return ApiIndex.from_entries(
        [
            (chunk, EmbeddingVector(vector.values * factor, vector.provider_id, vector.dim))
            for chunk, vector in index.entries
        ],
        index.provider_id,
        index.dim,
    )


def exhaustive_ranking(text, profile, provider):
    query = embed(text, provider)
    scored = [
        (chunk.function.name, cosine_similarity(query, embed(chunk.chunk_text, provider)))
        for chunk in chunk_profile(profile)
    ]
    return sorted(scored, key=lambda item: (-round(item[1], TIE_PRECISION), item[0]))


class TestRankingProperties:
    @pytest.mark.parametrize("corpus", ["robot", "wifi_sdr", "wifi_commercial"])
    @pytest.mark.parametrize("factor", [0.001, 0.5, 3.7, 250.0])
    def test_positive_scaling_keeps_best_and_order(self, indexes, provider, corpus, factor):
        for text in SAMPLE_TEXTS:
            plain = match_subtask(text, indexes[corpus], provider)
            rescaled = match_subtask(text, scaled(indexes[corpus], factor), provider)
            assert rescaled.best.name == plain.best.name
            assert [name for name, _ in rescaled.ranking] == [name for name, _ in plain.ranking]

    @pytest.mark.parametrize("corpus", ["robot", "wifi_sdr", "wifi_commercial"])
    def test_ranking_matches_exhaustive_sort(
        self, indexes, provider, robot_profile, wifi_sdr_profile, wifi_commercial_profile, corpus
    ):
        profile = {
            "robot": robot_profile,
            "wifi_sdr": wifi_sdr_profile,
            "wifi_commercial": wifi_commercial_profile,
        }[corpus]
        for text in SAMPLE_TEXTS:
            result = match_subtask(text, indexes[corpus], provider)
            expected = exhaustive_ranking(text, profile, provider)
            assert [name for name, _ in result.ranking] == [name for name, _ in expected]
            assert [score for _, score in result.ranking] == pytest.approx([score for _, score in expected])


class TestGoldenRankings:
    @pytest.mark.parametrize(
        "corpus,text,golden",
        [
            ("robot", "Move to shelf one", "robot_move_to_shelf_one.json"),
            ("robot", "Identify the vacancy in shelf one", "robot_identify_vacancy_shelf_one.json"),
            ("wifi_sdr", "List the known WiFi access points nearby.", "wifi_sdr_list_known_aps.json"),
            ("wifi_commercial", "List the known WiFi access points nearby.", "wifi_commercial_list_known_aps.json"),
        ],
    )
    def test_matches_golden_file(self, indexes, provider, corpus, text, golden):
        result = match_subtask(text, indexes[corpus], provider)
        assert ranking_to_json(result) == (GOLDEN_DIR / golden).read_text(encoding="utf-8")

    def test_written_file_is_byte_stable(self, indexes, provider, tmp_path):
        result = match_subtask("Move to shelf one", indexes["robot"], provider)
        first = write_golden_ranking(result, tmp_path / "a.json").read_bytes()
        second = write_golden_ranking(
            match_subtask("Move to shelf one", indexes["robot"], provider), tmp_path / "b.json"
        ).read_bytes()
        assert first == second
