"""Tests for scoring, mastery assessment, game selection and bot sessions."""

from __future__ import annotations

import statistics

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from segforge.clustering import ClusterSummary
from segforge.contentspace import (
    Difficulty,
    GameParams,
    extract_features,
    generate_maze,
)
from segforge.engine import (
    ActionTally,
    CurriculumComplete,
    EmptyPool,
    PlayerProfile,
    SessionRecord,
    UnknownMaterial,
    WeightLengthMismatch,
    assess_level,
    bot_simulate,
    candidate_pool,
    next_material,
    practice_session,
    run_session,
    score,
    select_game,
)
from segforge.knowledge import CompoundAnnotation
from segforge.mapping import ContentLibrary, GameRecord, deploy


# ===== Fixtures =====


def _compound(compound_id: int, formula: str) -> CompoundAnnotation:
    return CompoundAnnotation(
        formula=formula,
        atom_1_number=1,
        atom_2_number=8,
        total_types_of_atom=2,
        total_atom=compound_id + 1,
        total_character_symbol_1=1,
        total_character_symbol_2=1,
        compound_id=compound_id,
    )


# params consistent with each difficulty: (enemy_type, total_enemy)
_LEVEL_PARAMS = {
    "easy": ((0, 1), (0, 2), (0, 3), (0, 1), (0, 2), (0, 3)),
    "medium": ((0, 4), (0, 5), (1, 1), (1, 2), (0, 4), (1, 1)),
    "hard": ((1, 3), (1, 4), (1, 5), (1, 3), (1, 4), (1, 5)),
}


def _build_world():
    """A tiny but fully wired library plus its maze store."""
    mazes = {}
    features = {}
    for i in range(3):
        maze_id = f"m{i:04d}"
        grid = generate_maze(77 + i, width=11, height=11, maze_id=maze_id)
        mazes[maze_id] = grid
        features[maze_id] = extract_features(grid)

    compounds = [_compound(1, "H2O"), _compound(2, "CO2")]
    games: list[GameRecord] = []
    clusters: list[ClusterSummary] = []
    for level, params in _LEVEL_PARAMS.items():
        ids = []
        for j, (enemy_type, total_enemy) in enumerate(params):
            maze_id = f"m{j % 3:04d}"
            feats = features[maze_id]
            game_id = f"{level}-g{j}"
            games.append(
                GameRecord(
                    game_id=game_id,
                    maze_id=maze_id,
                    enemy_type=enemy_type,
                    total_enemy=total_enemy,
                    total_bullets=1 + j % 5,
                    difficulty=level,
                    total_path=feats.total_path,
                    total_corners=feats.total_corners,
                    total_intersections=feats.total_intersections,
                    total_deadend=feats.total_deadend,
                    complexity=feats.complexity,
                )
            )
            ids.append(game_id)
        clusters.append(
            ClusterSummary(f"{level}-000", level, 2, 0.5, (0.0,) * 8, tuple(ids[:2]))
        )
        clusters.append(
            ClusterSummary(f"{level}-001", level, 4, 1.5, (0.0,) * 8, tuple(ids[2:]))
        )
    mapping = deploy(
        compounds,
        {level: [c for c in clusters if c.difficulty == level] for level in _LEVEL_PARAMS},
    )
    library = ContentLibrary(
        compounds=compounds,
        games=games,
        clusters=clusters,
        mapping=mapping,
        metadata={},
    )
    return library, mazes


@pytest.fixture(scope="module")
def world():
    return _build_world()


# ===== Scoring =====


def test_score_unit_weights():
    assert score(ActionTally(positives=(5,), negatives=(2,))) == 3


def test_score_weighted():
    tally = ActionTally(positives=(3, 4), negatives=(2,))
    assert score(tally, positive_weights=(2, 1), negative_weights=(0.5,)) == 9


def test_score_no_negatives():
    assert score(ActionTally(positives=(4, 2), negatives=())) == 6


def test_score_weight_length_mismatch():
    tally = ActionTally(positives=(1, 2), negatives=(1,))
    with pytest.raises(WeightLengthMismatch):
        score(tally, positive_weights=(1.0,))
    with pytest.raises(WeightLengthMismatch):
        score(tally, negative_weights=(1.0, 1.0))


@given(
    pos=st.lists(st.integers(0, 50), min_size=2, max_size=2),
    neg=st.lists(st.integers(0, 50), min_size=2, max_size=2),
    pos2=st.lists(st.integers(0, 50), min_size=2, max_size=2),
    neg2=st.lists(st.integers(0, 50), min_size=2, max_size=2),
)
def test_score_is_linear(pos, neg, pos2, neg2):
    t1 = ActionTally(positives=tuple(pos), negatives=tuple(neg))
    t2 = ActionTally(positives=tuple(pos2), negatives=tuple(neg2))
    merged = ActionTally(
        positives=tuple(a + b for a, b in zip(pos, pos2)),
        negatives=tuple(a + b for a, b in zip(neg, neg2)),
    )
    assert score(merged) == score(t1) + score(t2)


# ===== Assessment =====


def test_assess_boundaries():
    assert assess_level(3.0, 3.0, 9.0) is Difficulty.MEDIUM
    assert assess_level(3.0 - 1e-9, 3.0, 9.0) is Difficulty.EASY
    assert assess_level(9.0, 3.0, 9.0) is Difficulty.HARD
    assert assess_level(-5.0, 3.0, 9.0) is Difficulty.EASY
    assert assess_level(6.0, 3.0, 9.0) is Difficulty.MEDIUM


def test_assess_rejects_unordered_thresholds():
    with pytest.raises(ValueError):
        assess_level(1.0, 5.0, 5.0)


@given(st.floats(-50, 50), st.floats(-50, 50))
def test_assess_is_monotone(s1, s2):
    order = {Difficulty.EASY: 0, Difficulty.MEDIUM: 1, Difficulty.HARD: 2}
    lo, hi = min(s1, s2), max(s1, s2)
    assert order[assess_level(lo, 3.0, 9.0)] <= order[assess_level(hi, 3.0, 9.0)]


# ===== Material progression =====


def test_new_player_starts_at_first_material():
    assert next_material(PlayerProfile("p1"), total_materials=100) == 1


def test_next_material_returns_current_index():
    profile = PlayerProfile("p1", next_material_index=42)
    assert next_material(profile, total_materials=100) == 42


def test_curriculum_complete():
    profile = PlayerProfile("p1", next_material_index=101)
    with pytest.raises(CurriculumComplete):
        next_material(profile, total_materials=100)


# ===== Candidate pool =====


def test_pool_is_whole_cluster_for_new_player(world):
    library, _ = world
    cluster = library.cluster_for(1, "easy")
    pool = candidate_pool(library, 1, Difficulty.EASY, played=set())
    assert [gid for gid, _ in pool] == sorted(cluster.member_game_ids)
    for gid, vector in pool:
        assert vector == library.game(gid).vector()


def test_pool_excludes_played(world):
    library, _ = world
    cluster = library.cluster_for(1, "easy")
    first = sorted(cluster.member_game_ids)[0]
    pool = candidate_pool(library, 1, "easy", played={first})
    assert first not in [gid for gid, _ in pool]
    assert len(pool) == len(cluster.member_game_ids) - 1


def test_pool_exhaustion_raises(world):
    library, _ = world
    cluster = library.cluster_for(1, "easy")
    with pytest.raises(EmptyPool):
        candidate_pool(library, 1, "easy", played=set(cluster.member_game_ids))


def test_pool_unknown_material(world):
    library, _ = world
    with pytest.raises(UnknownMaterial):
        candidate_pool(library, 99, "easy", played=set())


# ===== Game selection =====


def test_select_game_nearest_to_pool_mean():
    pool = [("a", (0.0, 0.0)), ("b", (2.0, 2.0)), ("c", (5.0, 5.0))]
    assert select_game(pool) == "b"


def test_select_game_singleton():
    assert select_game([("only", (3.0, 4.0))]) == "only"


def test_select_game_tie_takes_lowest_id():
    assert select_game([("b", (2.0, 2.0)), ("a", (0.0, 0.0))]) == "a"


def test_select_game_empty_pool():
    with pytest.raises(EmptyPool):
        select_game([])


@given(st.permutations(range(5)))
def test_select_game_permutation_invariant(order):
    base = [
        ("g0", (0.0, 1.0)),
        ("g1", (4.0, 4.0)),
        ("g2", (2.0, 2.5)),
        ("g3", (1.0, 0.0)),
        ("g4", (3.0, 5.0)),
    ]
    shuffled = [base[i] for i in order]
    assert select_game(shuffled) == select_game(base)


def _brute_force_select(pool):
    dim = len(pool[0][1])
    mean = tuple(sum(v[d] for _, v in pool) / len(pool) for d in range(dim))
    return min(pool, key=lambda p: (sum((x - m) ** 2 for x, m in zip(p[1], mean)), p[0]))[0]


def test_select_game_matches_brute_force_on_library_pools(world):
    library, _ = world
    for cluster in library.clusters:
        pool = [(gid, library.game(gid).vector()) for gid in sorted(cluster.member_game_ids)]
        assert select_game(pool) == _brute_force_select(pool)


# ===== Bot simulation =====


@pytest.fixture(scope="module")
def small_grid():
    return generate_maze(77, width=11, height=11, maze_id="m0000")


EASY_PARAMS = GameParams("g-e", "m0000", enemy_type=0, total_enemy=2, total_bullets=3)


def test_bot_is_deterministic(small_grid):
    a = bot_simulate(small_grid, EASY_PARAMS, "greedy", seed=11)
    b = bot_simulate(small_grid, EASY_PARAMS, "greedy", seed=11)
    assert a == b
    c = bot_simulate(small_grid, EASY_PARAMS, "random", seed=11)
    d = bot_simulate(small_grid, EASY_PARAMS, "random", seed=11)
    assert c == d


def test_bot_seeds_differ(small_grid):
    logs = {bot_simulate(small_grid, EASY_PARAMS, "random", seed=s).events for s in range(5)}
    assert len(logs) > 1


def test_bot_rejects_unknown_policy(small_grid):
    with pytest.raises(ValueError):
        bot_simulate(small_grid, EASY_PARAMS, "perfect", seed=0)


def test_bot_respects_time_and_tallies(small_grid):
    for seed in range(30):
        for policy in ("random", "greedy"):
            result = bot_simulate(small_grid, EASY_PARAMS, policy, seed)
            assert 1 <= result.duration <= 90
            assert all(c >= 0 for c in result.tally.positives)
            assert all(c >= 0 for c in result.tally.negatives)
            if result.victory:
                # ten correct collections are required before the exit opens
                assert result.tally.positives[0] >= 10


def test_bot_wins_and_loses_somewhere(small_grid):
    outcomes = {bot_simulate(small_grid, EASY_PARAMS, "greedy", s).victory for s in range(60)}
    assert outcomes == {True, False}


def test_greedy_beats_random_on_easy_games(small_grid):
    seeds = range(100)
    greedy = statistics.mean(
        score(bot_simulate(small_grid, EASY_PARAMS, "greedy", s).tally) for s in seeds
    )
    rand = statistics.mean(
        score(bot_simulate(small_grid, EASY_PARAMS, "random", s).tally) for s in seeds
    )
    assert greedy > rand


# ===== Practice sessions =====


def test_practice_sets_mastery_consistently():
    profile = PlayerProfile("p1")
    record = practice_session(profile, "greedy", seed=3)
    assert record.difficulty == "practice"
    assert record.compound_id == 0
    assert profile.mastery is assess_level(record.score)


def test_practice_reassesses_every_run():
    profile = PlayerProfile("p1", mastery=Difficulty.HARD)
    weak_seed = next(
        s
        for s in range(50)
        if practice_session(PlayerProfile("x"), "random", seed=s).score < 3.0
    )
    practice_session(profile, "random", seed=weak_seed)
    assert profile.mastery is Difficulty.EASY


def test_practice_is_deterministic():
    a = practice_session(PlayerProfile("p1"), "greedy", seed=9)
    b = practice_session(PlayerProfile("p2"), "greedy", seed=9)
    assert a.score == b.score
    assert a.events == b.events


# ===== Full sessions =====


def test_session_serves_from_mapped_cluster(world):
    library, mazes = world
    profile = PlayerProfile("p1")
    record = run_session(profile, library, mazes, "greedy", seed=1)
    cluster = library.cluster_for(1, "easy")
    assert record.game_id in cluster.member_game_ids
    assert record.game_id in profile.played_game_ids
    assert record.difficulty == "easy"
    assert record.compound_id == 1
    assert profile.history == [record]


def test_session_record_serializes(world):
    library, mazes = world
    record = run_session(PlayerProfile("p1"), library, mazes, "random", seed=5)
    data = record.to_record()
    assert data["player_id"] == "p1"
    assert data["positives"] == list(record.tally.positives)
    assert set(data) >= {"game_id", "score", "outcome", "duration", "fun", "pre_exam", "post_exam"}


def test_no_repeats_until_pool_empty(world):
    library, mazes = world
    profile = PlayerProfile("p1", mastery=Difficulty.MEDIUM)
    members = library.cluster_for(1, "medium").member_game_ids
    served = []
    for seed in range(len(members)):
        profile.next_material_index = 1  # stay on the same material
        served.append(run_session(profile, library, mazes, "random", seed=seed).game_id)
    assert sorted(served) == sorted(members)
    profile.next_material_index = 1
    with pytest.raises(EmptyPool):
        run_session(profile, library, mazes, "random", seed=99)


def test_recycle_reopens_exhausted_cluster(world):
    library, mazes = world
    profile = PlayerProfile("p1", mastery=Difficulty.MEDIUM)
    members = set(library.cluster_for(1, "medium").member_game_ids)
    profile.played_game_ids = set(members)
    profile.attempted_materials = {1}
    record = run_session(profile, library, mazes, "random", seed=0, recycle=True)
    assert record.recycled
    assert record.game_id in members
    assert profile.played_game_ids == {record.game_id}


def _find_seed(world, victory: bool) -> int:
    """A seed whose first easy session for compound 1 ends as requested."""
    library, mazes = world
    pool = candidate_pool(library, 1, "easy", played=set())
    game = library.game(select_game(pool))
    for seed in range(300):
        if bot_simulate(mazes[game.maze_id], game, "greedy", seed).victory is victory:
            return seed
    raise AssertionError("no matching seed found")


def test_victory_advances_material(world):
    library, mazes = world
    profile = PlayerProfile("p1")
    seed = _find_seed(world, victory=True)
    record = run_session(profile, library, mazes, "greedy", seed=seed)
    assert record.outcome == "victory"
    assert profile.next_material_index == 2
    assert record.pre_exam == 0 and record.post_exam == 1


def test_defeat_repeats_material(world):
    library, mazes = world
    profile = PlayerProfile("p1")
    seed = _find_seed(world, victory=False)
    record = run_session(profile, library, mazes, "greedy", seed=seed)
    assert record.outcome == "defeat"
    assert profile.next_material_index == 1
    assert record.pre_exam == 0 and record.post_exam == 0
    # the retry is no longer a first encounter
    retry = run_session(profile, library, mazes, "greedy", seed=seed + 1000)
    assert retry.compound_id == 1
    assert retry.pre_exam == 1


def test_session_score_uses_supplied_weights(world):
    library, mazes = world
    base = run_session(PlayerProfile("p1"), library, mazes, "greedy", seed=4)
    doubled = run_session(
        PlayerProfile("p2"),
        library,
        mazes,
        "greedy",
        seed=4,
        positive_weights=(2.0, 2.0),
        negative_weights=(0.0, 0.0),
    )
    assert doubled.tally == base.tally
    assert doubled.score == 2 * sum(base.tally.positives)


def test_curriculum_complete_propagates(world):
    library, mazes = world
    profile = PlayerProfile("p1", next_material_index=library.compound_count + 1)
    with pytest.raises(CurriculumComplete):
        run_session(profile, library, mazes, "greedy", seed=0)
