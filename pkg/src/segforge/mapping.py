"""Compound-to-cluster deployment and the persistent content library.

Each difficulty level contributes as many game clusters as there are
compounds. Clusters are ranked by size (ascending) so the easiest compound
pairs with the level's smallest cluster, and the whole assignment is stored
in a single-file relational library with a lossless JSON export.
"""

from __future__ import annotations

import json
import logging
import os
import sqlite3
import tempfile
from dataclasses import dataclass, field, replace

from .clustering import ClusterSummary
from .errors import SegforgeError
from .knowledge import CompoundAnnotation

logger = logging.getLogger(__name__)

LEVELS = ("easy", "medium", "hard")


class CardinalityMismatch(SegforgeError):
    """A level's cluster count differs from the compound count."""


class IntegrityViolation(SegforgeError):
    """Cross-table references in a loaded library do not line up."""


class CorruptStore(SegforgeError):
    """The library file cannot be read as a relational store."""


@dataclass(frozen=True)
class GameRecord:
    """One game variant with its difficulty and maze features."""

    game_id: str
    maze_id: str
    enemy_type: int
    total_enemy: int
    total_bullets: int
    difficulty: str
    total_path: int
    total_corners: int
    total_intersections: int
    total_deadend: int
    complexity: float

    def vector(self) -> tuple[float, ...]:
        return (
            float(self.enemy_type),
            float(self.total_enemy),
            float(self.total_bullets),
            float(self.total_path),
            float(self.total_corners),
            float(self.total_intersections),
            float(self.total_deadend),
            float(self.complexity),
        )


@dataclass(frozen=True)
class MappingEntry:
    """One curriculum cell: a compound's game cluster at one level."""

    compound_id: int
    difficulty: str
    cluster_id: str


def sort_clusters(summaries: list[ClusterSummary]) -> list[ClusterSummary]:
    """Order clusters by size ascending, spread descending, id ascending."""
    return sorted(summaries, key=lambda c: (c.n, -c.s, c.cluster_id))


def deploy(
    compounds: list[CompoundAnnotation],
    clusters_by_level: dict[str, list[ClusterSummary]],
) -> list[MappingEntry]:
    """Pair compounds with clusters positionally, level by level.

    Compounds are taken in compound_id order (easiest first) and clusters in
    :func:`sort_clusters` order, so the easiest compound receives the
    smallest cluster of every level. Each level must supply exactly one
    cluster per compound.
    """
    ordered = sorted(compounds, key=lambda c: c.compound_id)
    entries: list[MappingEntry] = []
    for level in LEVELS:
        clusters = clusters_by_level.get(level, [])
        if len(clusters) != len(ordered):
            raise CardinalityMismatch(
                f"level {level!r} has {len(clusters)} clusters for {len(ordered)} compounds"
            )
        for compound, cluster in zip(ordered, sort_clusters(clusters)):
            entries.append(
                MappingEntry(
                    compound_id=compound.compound_id,
                    difficulty=level,
                    cluster_id=cluster.cluster_id,
                )
            )
    return entries


@dataclass
class ContentLibrary:
    """The deployed curriculum: compounds, games, clusters and their wiring."""

    compounds: list[CompoundAnnotation]
    games: list[GameRecord]
    clusters: list[ClusterSummary]
    mapping: list[MappingEntry]
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        # Canonical row order: makes equality content-based and saves
        # deterministic regardless of construction order.
        self.compounds = sorted(self.compounds, key=lambda c: c.compound_id)
        self.games = sorted(self.games, key=lambda g: g.game_id)
        self.clusters = sorted(
            (
                c
                if tuple(sorted(c.member_game_ids)) == c.member_game_ids
                else replace(c, member_game_ids=tuple(sorted(c.member_game_ids)))
                for c in self.clusters
            ),
            key=lambda c: c.cluster_id,
        )
        self.mapping = sorted(self.mapping, key=lambda m: (m.compound_id, m.difficulty))
        self._games_by_id = {g.game_id: g for g in self.games}
        self._clusters_by_id = {c.cluster_id: c for c in self.clusters}
        self._compounds_by_id = {c.compound_id: c for c in self.compounds}
        self._mapping_index = {
            (m.compound_id, m.difficulty): m.cluster_id for m in self.mapping
        }

    @property
    def compound_count(self) -> int:
        return len(self.compounds)

    def compound(self, compound_id: int) -> CompoundAnnotation:
        return self._compounds_by_id[compound_id]

    def game(self, game_id: str) -> GameRecord:
        return self._games_by_id[game_id]

    def cluster(self, cluster_id: str) -> ClusterSummary:
        return self._clusters_by_id[cluster_id]

    def cluster_for(self, compound_id: int, difficulty: str) -> ClusterSummary:
        key = (compound_id, difficulty)
        if key not in self._mapping_index:
            raise KeyError(f"no cluster mapped for compound {compound_id} at {difficulty!r}")
        return self._clusters_by_id[self._mapping_index[key]]


def validate_library(library: ContentLibrary) -> None:
    """Check cross-references; raise IntegrityViolation on the first hole."""
    game_ids = {g.game_id for g in library.games}
    cluster_ids = {c.cluster_id for c in library.clusters}
    compound_ids = {c.compound_id for c in library.compounds}
    seen_game_owner: dict[str, str] = {}
    for cluster in library.clusters:
        if cluster.n != len(cluster.member_game_ids):
            raise IntegrityViolation(
                f"cluster {cluster.cluster_id!r} claims n={cluster.n} but has "
                f"{len(cluster.member_game_ids)} members"
            )
        for game_id in cluster.member_game_ids:
            if game_id not in game_ids:
                raise IntegrityViolation(
                    f"cluster {cluster.cluster_id!r} references unknown game {game_id!r}"
                )
            owner = seen_game_owner.setdefault(game_id, cluster.cluster_id)
            if owner != cluster.cluster_id:
                raise IntegrityViolation(
                    f"game {game_id!r} belongs to clusters {owner!r} and {cluster.cluster_id!r}"
                )
    mapped_clusters: set[str] = set()
    for entry in library.mapping:
        if entry.compound_id not in compound_ids:
            raise IntegrityViolation(f"mapping references unknown compound {entry.compound_id}")
        if entry.cluster_id not in cluster_ids:
            raise IntegrityViolation(f"mapping references unknown cluster {entry.cluster_id!r}")
        if entry.cluster_id in mapped_clusters:
            raise IntegrityViolation(f"cluster {entry.cluster_id!r} mapped twice")
        mapped_clusters.add(entry.cluster_id)


# ===== Relational persistence =====

_SCHEMA = """
CREATE TABLE compounds (
    compound_id INTEGER PRIMARY KEY,
    formula TEXT NOT NULL UNIQUE,
    atom_1_number INTEGER NOT NULL,
    atom_2_number INTEGER NOT NULL,
    total_types_of_atom INTEGER NOT NULL,
    total_atom INTEGER NOT NULL,
    total_character_symbol_1 INTEGER NOT NULL,
    total_character_symbol_2 INTEGER NOT NULL
);
CREATE TABLE games (
    game_id TEXT PRIMARY KEY,
    maze_id TEXT NOT NULL,
    enemy_type INTEGER NOT NULL,
    total_enemy INTEGER NOT NULL,
    total_bullets INTEGER NOT NULL,
    difficulty TEXT NOT NULL,
    total_path INTEGER NOT NULL,
    total_corners INTEGER NOT NULL,
    total_intersections INTEGER NOT NULL,
    total_deadend INTEGER NOT NULL,
    complexity REAL NOT NULL
);
CREATE TABLE clusters (
    cluster_id TEXT PRIMARY KEY,
    difficulty TEXT NOT NULL,
    n INTEGER NOT NULL,
    s REAL NOT NULL,
    centroid TEXT NOT NULL
);
CREATE TABLE membership (
    cluster_id TEXT NOT NULL REFERENCES clusters(cluster_id),
    game_id TEXT NOT NULL UNIQUE REFERENCES games(game_id),
    UNIQUE(cluster_id, game_id)
);
CREATE TABLE mapping (
    compound_id INTEGER NOT NULL REFERENCES compounds(compound_id),
    difficulty TEXT NOT NULL,
    cluster_id TEXT NOT NULL UNIQUE REFERENCES clusters(cluster_id),
    UNIQUE(compound_id, difficulty)
);
CREATE TABLE metadata (
    key TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
"""


def save_library(library: ContentLibrary, path: str) -> None:
    """Write the library as a fresh single-file relational store.

    The file is replaced atomically and built with a fixed insert order so
    identical libraries produce byte-identical files.
    """
    directory = os.path.dirname(os.path.abspath(path))
    handle, temp_path = tempfile.mkstemp(dir=directory, suffix=".sqlite.tmp")
    os.close(handle)
    os.unlink(temp_path)  # sqlite must create the file itself
    try:
        conn = sqlite3.connect(temp_path)
        try:
            conn.executescript(_SCHEMA)
            conn.executemany(
                "INSERT INTO compounds VALUES (?,?,?,?,?,?,?,?)",
                [
                    (
                        c.compound_id,
                        c.formula,
                        c.atom_1_number,
                        c.atom_2_number,
                        c.total_types_of_atom,
                        c.total_atom,
                        c.total_character_symbol_1,
                        c.total_character_symbol_2,
                    )
                    for c in sorted(library.compounds, key=lambda c: c.compound_id)
                ],
            )
            conn.executemany(
                "INSERT INTO games VALUES (?,?,?,?,?,?,?,?,?,?,?)",
                [
                    (
                        g.game_id,
                        g.maze_id,
                        g.enemy_type,
                        g.total_enemy,
                        g.total_bullets,
                        g.difficulty,
                        g.total_path,
                        g.total_corners,
                        g.total_intersections,
                        g.total_deadend,
                        g.complexity,
                    )
                    for g in sorted(library.games, key=lambda g: g.game_id)
                ],
            )
            ordered_clusters = sorted(library.clusters, key=lambda c: c.cluster_id)
            conn.executemany(
                "INSERT INTO clusters VALUES (?,?,?,?,?)",
                [
                    (c.cluster_id, c.difficulty, c.n, c.s, json.dumps(list(c.centroid)))
                    for c in ordered_clusters
                ],
            )
            conn.executemany(
                "INSERT INTO membership VALUES (?,?)",
                [
                    (c.cluster_id, game_id)
                    for c in ordered_clusters
                    for game_id in sorted(c.member_game_ids)
                ],
            )
            conn.executemany(
                "INSERT INTO mapping VALUES (?,?,?)",
                [
                    (m.compound_id, m.difficulty, m.cluster_id)
                    for m in sorted(
                        library.mapping, key=lambda m: (m.compound_id, m.difficulty)
                    )
                ],
            )
            conn.executemany(
                "INSERT INTO metadata VALUES (?,?)",
                sorted(library.metadata.items()),
            )
            conn.commit()
        finally:
            conn.close()
        os.replace(temp_path, path)
    except BaseException:
        if os.path.exists(temp_path):
            os.unlink(temp_path)
        raise


def load_library(path: str, expected_config_hash: str | None = None) -> ContentLibrary:
    """Load and validate a saved library.

    A stored config hash that differs from ``expected_config_hash`` logs a
    warning but still loads; broken cross-references raise
    IntegrityViolation and unreadable files raise CorruptStore.
    """
    if not os.path.exists(path):
        raise CorruptStore(f"no library file at {path!r}")
    try:
        conn = sqlite3.connect(path)
        try:
            compounds = [
                CompoundAnnotation(
                    formula=row[1],
                    atom_1_number=row[2],
                    atom_2_number=row[3],
                    total_types_of_atom=row[4],
                    total_atom=row[5],
                    total_character_symbol_1=row[6],
                    total_character_symbol_2=row[7],
                    compound_id=row[0],
                )
                for row in conn.execute(
                    "SELECT compound_id, formula, atom_1_number, atom_2_number,"
                    " total_types_of_atom, total_atom, total_character_symbol_1,"
                    " total_character_symbol_2 FROM compounds ORDER BY compound_id"
                )
            ]
            games = [
                GameRecord(*row)
                for row in conn.execute(
                    "SELECT game_id, maze_id, enemy_type, total_enemy, total_bullets,"
                    " difficulty, total_path, total_corners, total_intersections,"
                    " total_deadend, complexity FROM games ORDER BY game_id"
                )
            ]
            members: dict[str, list[str]] = {}
            for cluster_id, game_id in conn.execute(
                "SELECT cluster_id, game_id FROM membership ORDER BY cluster_id, game_id"
            ):
                members.setdefault(cluster_id, []).append(game_id)
            clusters = [
                ClusterSummary(
                    cluster_id=row[0],
                    difficulty=row[1],
                    n=row[2],
                    s=row[3],
                    centroid=tuple(json.loads(row[4])),
                    member_game_ids=tuple(members.get(row[0], ())),
                )
                for row in conn.execute(
                    "SELECT cluster_id, difficulty, n, s, centroid FROM clusters"
                    " ORDER BY cluster_id"
                )
            ]
            mapping = [
                MappingEntry(compound_id=row[0], difficulty=row[1], cluster_id=row[2])
                for row in conn.execute(
                    "SELECT compound_id, difficulty, cluster_id FROM mapping"
                    " ORDER BY compound_id, difficulty"
                )
            ]
            metadata = dict(conn.execute("SELECT key, value FROM metadata ORDER BY key"))
        finally:
            conn.close()
    except sqlite3.DatabaseError as exc:
        raise CorruptStore(f"cannot read library at {path!r}: {exc}") from exc
    library = ContentLibrary(
        compounds=compounds,
        games=games,
        clusters=clusters,
        mapping=mapping,
        metadata=metadata,
    )
    validate_library(library)
    stored_hash = metadata.get("config_hash")
    if (
        expected_config_hash is not None
        and stored_hash is not None
        and stored_hash != expected_config_hash
    ):
        logger.warning(
            "library at %s was built with config hash %s, expected %s",
            path,
            stored_hash,
            expected_config_hash,
        )
    return library


# ===== JSON export =====


def export_json(library: ContentLibrary) -> str:
    """Lossless canonical JSON rendering of the whole library."""
    payload = {
        "compounds": [
            c.to_record() for c in sorted(library.compounds, key=lambda c: c.compound_id)
        ],
        "games": [
            {
                "game_id": g.game_id,
                "maze_id": g.maze_id,
                "enemy_type": g.enemy_type,
                "total_enemy": g.total_enemy,
                "total_bullets": g.total_bullets,
                "difficulty": g.difficulty,
                "total_path": g.total_path,
                "total_corners": g.total_corners,
                "total_intersections": g.total_intersections,
                "total_deadend": g.total_deadend,
                "complexity": g.complexity,
            }
            for g in sorted(library.games, key=lambda g: g.game_id)
        ],
        "clusters": [
            {
                "cluster_id": c.cluster_id,
                "difficulty": c.difficulty,
                "n": c.n,
                "s": c.s,
                "centroid": list(c.centroid),
                "member_game_ids": sorted(c.member_game_ids),
            }
            for c in sorted(library.clusters, key=lambda c: c.cluster_id)
        ],
        "mapping": [
            {
                "compound_id": m.compound_id,
                "difficulty": m.difficulty,
                "cluster_id": m.cluster_id,
            }
            for m in sorted(library.mapping, key=lambda m: (m.compound_id, m.difficulty))
        ],
        "metadata": dict(sorted(library.metadata.items())),
    }
    return json.dumps(payload, sort_keys=True, indent=1)


def library_from_json(text: str) -> ContentLibrary:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptStore(f"library JSON does not parse: {exc}") from exc
    compounds = [
        CompoundAnnotation(
            formula=c["formula"],
            atom_1_number=c["atom_1_number"],
            atom_2_number=c["atom_2_number"],
            total_types_of_atom=c["total_types_of_atom"],
            total_atom=c["total_atom"],
            total_character_symbol_1=c["total_character_symbol_1"],
            total_character_symbol_2=c["total_character_symbol_2"],
            compound_id=c["compound_id"],
        )
        for c in payload["compounds"]
    ]
    games = [
        GameRecord(
            game_id=g["game_id"],
            maze_id=g["maze_id"],
            enemy_type=g["enemy_type"],
            total_enemy=g["total_enemy"],
            total_bullets=g["total_bullets"],
            difficulty=g["difficulty"],
            total_path=g["total_path"],
            total_corners=g["total_corners"],
            total_intersections=g["total_intersections"],
            total_deadend=g["total_deadend"],
            complexity=g["complexity"],
        )
        for g in payload["games"]
    ]
    clusters = [
        ClusterSummary(
            cluster_id=c["cluster_id"],
            difficulty=c["difficulty"],
            n=c["n"],
            s=c["s"],
            centroid=tuple(c["centroid"]),
            member_game_ids=tuple(c["member_game_ids"]),
        )
        for c in payload["clusters"]
    ]
    mapping = [
        MappingEntry(
            compound_id=m["compound_id"],
            difficulty=m["difficulty"],
            cluster_id=m["cluster_id"],
        )
        for m in payload["mapping"]
    ]
    library = ContentLibrary(
        compounds=compounds,
        games=games,
        clusters=clusters,
        mapping=mapping,
        metadata=dict(payload["metadata"]),
    )
    validate_library(library)
    return library


def export_level_curves(library: ContentLibrary) -> tuple[str, str]:
    """Per-compound cluster size (N) and spread (S) curves as CSV text.

    Returns the pair (n_csv, s_csv); columns are compound_id then one column
    per difficulty level.
    """
    n_lines = ["compound_id,easy,medium,hard"]
    s_lines = ["compound_id,easy,medium,hard"]
    for compound in sorted(library.compounds, key=lambda c: c.compound_id):
        sizes = []
        spreads = []
        for level in LEVELS:
            cluster = library.cluster_for(compound.compound_id, level)
            sizes.append(str(cluster.n))
            spreads.append(repr(cluster.s))
        n_lines.append(f"{compound.compound_id},{','.join(sizes)}")
        s_lines.append(f"{compound.compound_id},{','.join(spreads)}")
    return "\n".join(n_lines) + "\n", "\n".join(s_lines) + "\n"
