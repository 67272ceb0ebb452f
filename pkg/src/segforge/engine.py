"""Adaptive game serving and headless bot play.

A player practices once to estimate a mastery level, then works through the
compound curriculum in order. For each material the engine picks the game
closest to the centroid of the player's unplayed games inside the mapped
cluster, simulates (or records) a play session, scores the logged actions,
and advances the curriculum on victory.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field

from .contentspace import Difficulty, GameParams, MazeGrid, PATH, generate_maze
from .errors import SegforgeError
from .mapping import ContentLibrary, GameRecord

POSITIVE_ACTION_NAMES = ("correct_collections", "accurate_shots")
NEGATIVE_ACTION_NAMES = ("life_losses", "wrong_collections")

# Session scores that separate the three mastery bands. Calibrated against
# the bundled bot policies on the practice game (200 seeds each): random
# play stays almost entirely below 3, greedy play splits roughly evenly
# across the three bands.
DEFAULT_EASY_MEDIUM = 3.0
DEFAULT_MEDIUM_HARD = 9.0

TIME_LIMIT = 90  # seconds; one simulation tick per second
STARTING_LIVES = 3
COLLECTION_TARGET = 10
GOOD_ATOMS_ON_FIELD = 6
BAD_ATOMS_ON_FIELD = 4
AVATAR_SPEED = 4  # cells per tick; enemies move one
SHOT_RANGE = 6

PRACTICE_MAZE_SEED = 1729
PRACTICE_GAME = GameParams(
    game_id="practice-game",
    maze_id="practice",
    enemy_type=0,
    total_enemy=2,
    total_bullets=3,
)


class WeightLengthMismatch(SegforgeError):
    """Weight vectors must match the action tally lengths."""


class UnknownMaterial(SegforgeError):
    """The requested compound is not mapped in the library."""


class EmptyPool(SegforgeError):
    """Every game in the mapped cluster has already been played."""


class CurriculumComplete(SegforgeError):
    """The player has finished the last compound."""


@dataclass(frozen=True)
class ActionTally:
    """Counts of positive and negative logged actions for one session."""

    positives: tuple[int, ...]
    negatives: tuple[int, ...]


@dataclass(frozen=True)
class SimEvent:
    tick: int
    kind: str
    detail: str = ""


@dataclass(frozen=True)
class SimResult:
    victory: bool
    duration: int
    tally: ActionTally
    events: tuple[SimEvent, ...]


@dataclass
class SessionRecord:
    """One served and played game with its logged outcome."""

    player_id: str
    compound_id: int
    difficulty: str
    game_id: str
    policy: str
    seed: int
    tally: ActionTally
    score: float
    outcome: str
    duration: int
    events: tuple[SimEvent, ...] = ()
    recycled: bool = False
    fun: bool = False
    pre_exam: int = 0
    post_exam: int = 0

    def to_record(self) -> dict:
        return {
            "player_id": self.player_id,
            "compound_id": self.compound_id,
            "difficulty": self.difficulty,
            "game_id": self.game_id,
            "policy": self.policy,
            "seed": self.seed,
            "positives": list(self.tally.positives),
            "negatives": list(self.tally.negatives),
            "score": self.score,
            "outcome": self.outcome,
            "duration": self.duration,
            "recycled": self.recycled,
            "fun": self.fun,
            "pre_exam": self.pre_exam,
            "post_exam": self.post_exam,
        }


@dataclass
class PlayerProfile:
    """Mutable curriculum state for one player."""

    player_id: str
    mastery: Difficulty = Difficulty.EASY
    next_material_index: int = 1
    played_game_ids: set[str] = field(default_factory=set)
    attempted_materials: set[int] = field(default_factory=set)
    history: list[SessionRecord] = field(default_factory=list)


# ===== Scoring and assessment =====


def score(
    tally: ActionTally,
    positive_weights: tuple[float, ...] | None = None,
    negative_weights: tuple[float, ...] | None = None,
) -> float:
    """Weighted positive actions minus weighted negative actions."""
    if positive_weights is None:
        positive_weights = (1.0,) * len(tally.positives)
    if negative_weights is None:
        negative_weights = (1.0,) * len(tally.negatives)
    if len(positive_weights) != len(tally.positives):
        raise WeightLengthMismatch(
            f"{len(tally.positives)} positive counts, {len(positive_weights)} weights"
        )
    if len(negative_weights) != len(tally.negatives):
        raise WeightLengthMismatch(
            f"{len(tally.negatives)} negative counts, {len(negative_weights)} weights"
        )
    gain = sum(w * a for w, a in zip(positive_weights, tally.positives))
    loss = sum(w * a for w, a in zip(negative_weights, tally.negatives))
    return gain - loss


def assess_level(
    session_score: float,
    easy_medium: float = DEFAULT_EASY_MEDIUM,
    medium_hard: float = DEFAULT_MEDIUM_HARD,
) -> Difficulty:
    """Band a session score into a mastery level (half-open intervals)."""
    if easy_medium >= medium_hard:
        raise ValueError("easy_medium threshold must lie below medium_hard")
    if session_score < easy_medium:
        return Difficulty.EASY
    if session_score < medium_hard:
        return Difficulty.MEDIUM
    return Difficulty.HARD


# ===== Material and game selection =====


def next_material(profile: PlayerProfile, total_materials: int) -> int:
    """The compound the player should study next (1-based)."""
    if profile.next_material_index > total_materials:
        raise CurriculumComplete(
            f"player {profile.player_id!r} finished all {total_materials} materials"
        )
    return profile.next_material_index


def candidate_pool(
    library: ContentLibrary,
    compound_id: int,
    mastery: Difficulty | str,
    played: set[str],
) -> list[tuple[str, tuple[float, ...]]]:
    """Unplayed (game_id, feature vector) pairs of the mapped cluster.

    Sorted by game_id; a brand-new player sees the whole cluster.
    """
    level = mastery.value if isinstance(mastery, Difficulty) else mastery
    try:
        cluster = library.cluster_for(compound_id, level)
    except KeyError as exc:
        raise UnknownMaterial(str(exc)) from exc
    remaining = sorted(set(cluster.member_game_ids) - played)
    if not remaining:
        raise EmptyPool(
            f"all {len(cluster.member_game_ids)} games of cluster "
            f"{cluster.cluster_id!r} already played"
        )
    return [(game_id, library.game(game_id).vector()) for game_id in remaining]


def select_game(pool: list[tuple[str, tuple[float, ...]]]) -> str:
    """The pool member closest to the pool's own mean vector.

    The reference point is recomputed from the remaining candidates, not
    taken from any stored cluster summary. Distance ties pick the lowest
    game_id.
    """
    if not pool:
        raise EmptyPool("cannot select from an empty pool")
    dim = len(pool[0][1])
    centroid = tuple(
        sum(vector[d] for _, vector in pool) / len(pool) for d in range(dim)
    )
    best_id = None
    best_key = None
    for game_id, vector in pool:
        dist = sum((x - c) ** 2 for x, c in zip(vector, centroid))
        key = (dist, game_id)
        if best_key is None or key < best_key:
            best_key = key
            best_id = game_id
    return best_id


# ===== Headless bot simulation =====


class _Arena:
    """Mutable play state on one maze."""

    def __init__(self, grid: MazeGrid, params: GameParams | GameRecord, rng: random.Random):
        self.rng = rng
        self.width = grid.width
        self.height = grid.height
        self.cells = grid.cells
        self.path_cells = [
            (x, y)
            for y in range(grid.height)
            for x in range(grid.width)
            if grid.cells[y][x] == PATH
        ]
        self.start = self.path_cells[0]
        self.exit = self.path_cells[-1]
        self.avatar = self.start
        self.lives = STARTING_LIVES
        self.ammo = params.total_bullets
        self.collected = 0
        self.enemy_type = params.enemy_type
        spawn_candidates = [
            c for c in self.path_cells if c not in (self.start, self.exit)
        ]
        self.enemies = rng.sample(spawn_candidates, min(params.total_enemy, len(spawn_candidates)))
        free = [c for c in spawn_candidates if c not in self.enemies]
        picks = rng.sample(free, min(GOOD_ATOMS_ON_FIELD + BAD_ATOMS_ON_FIELD, len(free)))
        self.good_atoms = set(picks[:GOOD_ATOMS_ON_FIELD])
        self.bad_atoms = set(picks[GOOD_ATOMS_ON_FIELD:])

    def is_path(self, cell: tuple[int, int]) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height and self.cells[y][x] == PATH

    def neighbors(self, cell: tuple[int, int]) -> list[tuple[int, int]]:
        x, y = cell
        return [
            c
            for c in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1))
            if self.is_path(c)
        ]

    def respawn_atom(self, good: bool) -> None:
        occupied = self.good_atoms | self.bad_atoms | {self.avatar, self.start, self.exit}
        free = [c for c in self.path_cells if c not in occupied]
        if not free:
            return
        cell = self.rng.choice(free)
        (self.good_atoms if good else self.bad_atoms).add(cell)

    def line_of_sight(self, source: tuple[int, int], target: tuple[int, int]) -> bool:
        sx, sy = source
        tx, ty = target
        if sx != tx and sy != ty:
            return False
        distance = abs(sx - tx) + abs(sy - ty)
        if distance == 0 or distance > SHOT_RANGE:
            return False
        step_x = (tx > sx) - (tx < sx)
        step_y = (ty > sy) - (ty < sy)
        x, y = sx + step_x, sy + step_y
        while (x, y) != (tx, ty):
            if self.cells[y][x] != PATH:
                return False
            x, y = x + step_x, y + step_y
        return True

    def visible_enemies(self) -> list[tuple[int, tuple[int, int]]]:
        """(distance, cell) for enemies in shooting range, nearest first."""
        hits = []
        for cell in self.enemies:
            if self.line_of_sight(self.avatar, cell):
                hits.append((abs(cell[0] - self.avatar[0]) + abs(cell[1] - self.avatar[1]), cell))
        return sorted(hits)

    def distance_field(self, source: tuple[int, int], blocked: set[tuple[int, int]] | None = None):
        """BFS distances over path cells from ``source``."""
        blocked = blocked or set()
        dist = {source: 0}
        queue = deque([source])
        while queue:
            cell = queue.popleft()
            for neighbor in self.neighbors(cell):
                if neighbor in dist or neighbor in blocked:
                    continue
                dist[neighbor] = dist[cell] + 1
                queue.append(neighbor)
        return dist

    def enemy_distance_field(self):
        """BFS distances to the nearest enemy (multi-source)."""
        dist = {cell: 0 for cell in self.enemies}
        queue = deque(self.enemies)
        while queue:
            cell = queue.popleft()
            for neighbor in self.neighbors(cell):
                if neighbor in dist:
                    continue
                dist[neighbor] = dist[cell] + 1
                queue.append(neighbor)
        return dist


def _avatar_shoot(arena: _Arena, tally: dict, events: list[SimEvent], tick: int) -> None:
    arena.ammo -= 1
    visible = arena.visible_enemies()
    if visible:
        _, cell = visible[0]
        arena.enemies.remove(cell)
        # The hit enemy retreats to a far, seeded respawn point.
        occupied = set(arena.enemies) | {arena.avatar, arena.start, arena.exit}
        free = [c for c in arena.path_cells if c not in occupied]
        if free:
            arena.enemies.append(arena.rng.choice(free))
        tally["accurate_shots"] += 1
        events.append(SimEvent(tick, "shot_hit", f"{cell[0]},{cell[1]}"))
    else:
        events.append(SimEvent(tick, "shot_missed"))


def _enter_cell(
    arena: _Arena, cell: tuple[int, int], tally: dict, events: list[SimEvent], tick: int
) -> bool:
    """Move the avatar onto ``cell`` and apply its effects.

    Returns True when the move wins the game.
    """
    arena.avatar = cell
    if arena.avatar in arena.enemies:
        arena.lives -= 1
        tally["life_losses"] += 1
        events.append(SimEvent(tick, "life_lost", "enemy_contact"))
        arena.avatar = arena.start
        return False
    if arena.avatar in arena.good_atoms:
        arena.good_atoms.remove(arena.avatar)
        arena.collected += 1
        tally["correct_collections"] += 1
        events.append(SimEvent(tick, "collect_good", str(arena.collected)))
        if arena.collected < COLLECTION_TARGET:
            arena.respawn_atom(good=True)
        if arena.collected == COLLECTION_TARGET:
            events.append(SimEvent(tick, "exit_open"))
    elif arena.avatar in arena.bad_atoms:
        arena.bad_atoms.remove(arena.avatar)
        arena.lives -= 1
        tally["wrong_collections"] += 1
        events.append(SimEvent(tick, "collect_bad"))
        arena.respawn_atom(good=False)
    if arena.collected >= COLLECTION_TARGET and arena.avatar == arena.exit:
        events.append(SimEvent(tick, "victory"))
        return True
    return False


def _random_turn(arena: _Arena, tally: dict, events: list[SimEvent], tick: int) -> bool:
    if arena.ammo > 0 and arena.rng.random() < 0.25:
        _avatar_shoot(arena, tally, events, tick)
        return False
    for _ in range(AVATAR_SPEED):
        options = arena.neighbors(arena.avatar)
        if not options:
            return False
        if _enter_cell(arena, arena.rng.choice(options), tally, events, tick):
            return True
    return False


def _route_field(arena: _Arena, target: tuple[int, int]):
    """BFS field toward ``target``, avoiding hazards when a route allows it.

    In a perfect maze there is a single corridor between any two cells, so
    the avoidance levels collapse quickly: block enemy surroundings first,
    then just enemies, then accept any route.
    """
    danger = set(arena.enemies)
    for enemy in arena.enemies:
        danger.update(arena.neighbors(enemy))
    for blocked in (
        arena.bad_atoms | danger,
        arena.bad_atoms | set(arena.enemies),
        set(arena.enemies),
        set(),
    ):
        field = arena.distance_field(target, blocked=blocked - {target, arena.avatar})
        if arena.avatar in field:
            return field
    return None


def _flee_step(arena: _Arena) -> None:
    """Back away when an enemy is within two cells and no route exists."""
    enemy_field = arena.enemy_distance_field()
    gap = enemy_field.get(arena.avatar, TIME_LIMIT)
    if gap > 2:
        return
    nxt = None
    for option in sorted(arena.neighbors(arena.avatar)):
        option_gap = enemy_field.get(option, TIME_LIMIT)
        if option not in arena.enemies and option not in arena.bad_atoms and option_gap > gap:
            gap = option_gap
            nxt = option
    if nxt is not None:
        arena.avatar = nxt


def _greedy_turn(arena: _Arena, tally: dict, events: list[SimEvent], tick: int) -> bool:
    if arena.ammo > 0 and arena.visible_enemies():
        _avatar_shoot(arena, tally, events, tick)
        return False
    if arena.collected >= COLLECTION_TARGET:
        target = arena.exit
    else:
        # nearest correct atom, preferring ones whose corridor is free of
        # wrong atoms and enemies (crossing either costs a life)
        target = None
        for hazards in (
            set(arena.enemies) | arena.bad_atoms,
            set(arena.enemies),
            set(),
        ):
            field = arena.distance_field(arena.avatar, blocked=hazards)
            reachable = sorted((field[a], a) for a in arena.good_atoms if a in field)
            if reachable:
                target = reachable[0][1]
                break
    if target is None:
        _flee_step(arena)
        return False
    field = _route_field(arena, target)
    if field is None:
        _flee_step(arena)
        return False
    for _ in range(AVATAR_SPEED):
        nxt = min(
            (
                n
                for n in arena.neighbors(arena.avatar)
                if n in field and field[n] < field[arena.avatar] and n not in arena.enemies
            ),
            key=lambda n: (field[n], n),
            default=None,
        )
        if nxt is None:
            _flee_step(arena)
            return False
        if _enter_cell(arena, nxt, tally, events, tick):
            return True
        if arena.avatar == target or arena.avatar == arena.start:
            return False
    return False


def _enemy_turn(arena: _Arena, tally: dict, events: list[SimEvent], tick: int) -> None:
    moved: list[tuple[int, int]] = []
    chase_field = None
    if arena.enemy_type == 1:
        chase_field = arena.distance_field(arena.avatar)
    for cell in arena.enemies:
        if arena.enemy_type == 1 and chase_field is not None and cell in chase_field:
            nxt = min(
                (n for n in arena.neighbors(cell) if n in chase_field),
                key=lambda n: (chase_field[n], n),
                default=cell,
            )
            if chase_field.get(nxt, 0) >= chase_field.get(cell, 0):
                nxt = cell
        else:
            options = arena.neighbors(cell) + [cell]
            nxt = arena.rng.choice(options)
        moved.append(nxt)
    arena.enemies = moved
    if arena.avatar in arena.enemies:
        arena.lives -= 1
        tally["life_losses"] += 1
        events.append(SimEvent(tick, "life_lost", "enemy_caught_avatar"))
        arena.avatar = arena.start


def bot_simulate(
    grid: MazeGrid,
    params: GameParams | GameRecord,
    policy: str,
    seed: int,
) -> SimResult:
    """Play one game headlessly with a scripted policy.

    One tick is one simulated second, capped at the 90-second session limit.
    The bot wins by collecting ten correct atoms and then reaching the exit;
    it loses on expired time or exhausted lives. The run is a pure function
    of (maze, params, policy, seed).
    """
    if policy not in ("random", "greedy"):
        raise ValueError(f"unknown policy {policy!r}")
    rng = random.Random(seed)
    arena = _Arena(grid, params, rng)
    tally = {name: 0 for name in POSITIVE_ACTION_NAMES + NEGATIVE_ACTION_NAMES}
    events: list[SimEvent] = [SimEvent(0, "spawn", f"{arena.avatar[0]},{arena.avatar[1]}")]
    victory = False
    duration = TIME_LIMIT
    for tick in range(1, TIME_LIMIT + 1):
        if policy == "random":
            victory = _random_turn(arena, tally, events, tick)
        else:
            victory = _greedy_turn(arena, tally, events, tick)
        if victory:
            duration = tick
            break
        if arena.lives <= 0:
            events.append(SimEvent(tick, "defeat", "no_lives"))
            duration = tick
            break
        _enemy_turn(arena, tally, events, tick)
        if arena.lives <= 0:
            events.append(SimEvent(tick, "defeat", "no_lives"))
            duration = tick
            break
    else:
        events.append(SimEvent(TIME_LIMIT, "defeat", "time_out"))
    return SimResult(
        victory=victory,
        duration=duration,
        tally=ActionTally(
            positives=tuple(tally[name] for name in POSITIVE_ACTION_NAMES),
            negatives=tuple(tally[name] for name in NEGATIVE_ACTION_NAMES),
        ),
        events=tuple(events),
    )


# ===== Sessions =====


def practice_session(
    profile: PlayerProfile,
    policy: str,
    seed: int,
    *,
    easy_medium: float = DEFAULT_EASY_MEDIUM,
    medium_hard: float = DEFAULT_MEDIUM_HARD,
    positive_weights: tuple[float, ...] | None = None,
    negative_weights: tuple[float, ...] | None = None,
) -> SessionRecord:
    """Estimate mastery by playing the stand-alone practice game.

    The practice maze is fixed and independent of the content library, so
    the estimate depends only on play quality and the seed.
    """
    grid = generate_maze(PRACTICE_MAZE_SEED, maze_id="practice")
    result = bot_simulate(grid, PRACTICE_GAME, policy, seed)
    session_score = score(result.tally, positive_weights, negative_weights)
    profile.mastery = assess_level(session_score, easy_medium, medium_hard)
    return SessionRecord(
        player_id=profile.player_id,
        compound_id=0,
        difficulty="practice",
        game_id=PRACTICE_GAME.game_id,
        policy=policy,
        seed=seed,
        tally=result.tally,
        score=session_score,
        outcome="victory" if result.victory else "defeat",
        duration=result.duration,
        events=result.events,
    )


def run_session(
    profile: PlayerProfile,
    library: ContentLibrary,
    mazes: dict[str, MazeGrid],
    policy: str,
    seed: int,
    *,
    recycle: bool = False,
    positive_weights: tuple[float, ...] | None = None,
    negative_weights: tuple[float, ...] | None = None,
) -> SessionRecord:
    """Serve, simulate and record one curriculum session.

    Victory advances the curriculum to the next compound; defeat keeps the
    player on the same material. With ``recycle`` enabled an exhausted
    cluster forgets its played games instead of failing.
    """
    material = next_material(profile, library.compound_count)
    recycled = False
    try:
        pool = candidate_pool(library, material, profile.mastery, profile.played_game_ids)
    except EmptyPool:
        if not recycle:
            raise
        cluster = library.cluster_for(material, profile.mastery.value)
        profile.played_game_ids -= set(cluster.member_game_ids)
        recycled = True
        pool = candidate_pool(library, material, profile.mastery, profile.played_game_ids)
    game_id = select_game(pool)
    game = library.game(game_id)
    result = bot_simulate(mazes[game.maze_id], game, policy, seed)
    session_score = score(result.tally, positive_weights, negative_weights)

    first_attempt = material not in profile.attempted_materials
    record = SessionRecord(
        player_id=profile.player_id,
        compound_id=material,
        difficulty=game.difficulty,
        game_id=game_id,
        policy=policy,
        seed=seed,
        tally=result.tally,
        score=session_score,
        outcome="victory" if result.victory else "defeat",
        duration=result.duration,
        events=result.events,
        recycled=recycled,
        # Bot stand-ins for the survey fields: a session is "fun" when the
        # score came out positive, and the exam bit flips on a win.
        fun=session_score > 0,
        pre_exam=0 if first_attempt else 1,
        post_exam=1 if result.victory else (0 if first_attempt else 1),
    )
    profile.attempted_materials.add(material)
    profile.played_game_ids.add(game_id)
    profile.history.append(record)
    if result.victory:
        profile.next_material_index += 1
    return record
