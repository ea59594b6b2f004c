"""Load intent-detection benchmarks and cast them to multiple-choice form.

Supported datasets and their published on-disk layouts:

* snips  -- one directory per intent, each holding train_<Intent>.json,
  train_<Intent>_full.json and validate_<Intent>.json.  The dataset ships
  no test set, so splits are remapped: the 2,100-example small training
  split stays train, the full training set becomes validation, and the
  original validation set becomes test.
* sgd    -- train/ dev/ test/ directories of dialogues_*.json plus a
  schema.json per split.  Each user turn becomes one instance whose
  context is the last 3 utterances joined by single spaces and whose
  candidates are the intents of the turn's active service (1-4).
* fb_en / fb_es / fb_th -- {train,eval,test}-{lang}.tsv with the intent
  label in column 0 and the raw utterance in column 2; splits map 1:1.

DatasetStats mirrors the published split sizes (Snips: 2,100 train / 700
valid / no test), independent of the split remapping above.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Sequence

from .pretrain import derive_seed
from .text import Language


class BenchmarkError(Exception):
    pass


class Split(str, Enum):
    train = "train"
    validation = "validation"
    test = "test"


class Dataset(str, Enum):
    snips = "snips"
    sgd = "sgd"
    fb_en = "fb_en"
    fb_es = "fb_es"
    fb_th = "fb_th"

    @property
    def language(self) -> Language:
        return {
            Dataset.snips: Language.en,
            Dataset.sgd: Language.en,
            Dataset.fb_en: Language.en,
            Dataset.fb_es: Language.es,
            Dataset.fb_th: Language.th,
        }[self]


@dataclass(frozen=True)
class IntentInstance:
    id: str
    context: str
    candidates: tuple[str, ...]
    gold_index: int
    split: Split
    dataset: Dataset


@dataclass(frozen=True)
class DatasetStats:
    train_size: int
    valid_size: int
    test_size: int
    num_intents: int


# Published intent keys -> the readable names used as candidate text.
SNIPS_INTENTS = {
    "AddToPlaylist": "Add to Playlist",
    "BookRestaurant": "Book Restaurant",
    "GetWeather": "Get Weather",
    "PlayMusic": "Play Music",
    "RateBook": "Rate Book",
    "SearchCreativeWork": "Search Creative Work",
    "SearchScreeningEvent": "Search Screening Event",
}

FB_INTENTS = {
    "alarm/cancel_alarm": "Cancel Alarm",
    "alarm/modify_alarm": "Modify Alarm",
    "alarm/set_alarm": "Set Alarm",
    "alarm/show_alarms": "Show Alarms",
    "alarm/snooze_alarm": "Snooze Alarm",
    "alarm/time_left_on_alarm": "Check Time Left on Alarm",
    "reminder/cancel_reminder": "Cancel Reminder",
    "reminder/set_reminder": "Set Reminder",
    "reminder/show_reminders": "Show Reminders",
    "weather/checkSunrise": "Check Sunrise",
    "weather/checkSunset": "Check Sunset",
    "weather/find": "Find Weather",
}

SGD_CONTEXT_WINDOW = 3


def _require_files(paths: Sequence[Path], dataset: Dataset) -> None:
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        manifest = "\n  ".join(str(p) for p in paths)
        raise BenchmarkError(
            f"{dataset.value}: missing {len(missing)} expected file(s): "
            f"{missing}\nexpected manifest:\n  {manifest}"
        )


def _read_json(path: Path) -> object:
    # The 2017 Snips release is not valid UTF-8 throughout.
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except UnicodeDecodeError:
        return json.loads(path.read_text(encoding="latin-1"))


def _load_snips(root: Path) -> tuple[list[IntentInstance], DatasetStats]:
    intents = sorted(SNIPS_INTENTS)
    expected = []
    for key in intents:
        d = root / key
        expected += [
            d / f"train_{key}.json",
            d / f"train_{key}_full.json",
            d / f"validate_{key}.json",
        ]
    _require_files(expected, Dataset.snips)

    candidates = tuple(sorted(SNIPS_INTENTS.values()))
    instances: list[IntentInstance] = []
    published = {"train": 0, "valid": 0}

    def add(path: Path, key: str, split: Split) -> int:
        payload = _read_json(path)
        entries = payload[key]
        gold = candidates.index(SNIPS_INTENTS[key])
        count = 0
        for i, entry in enumerate(entries):
            utterance = "".join(chunk["text"] for chunk in entry["data"]).strip()
            instances.append(
                IntentInstance(
                    id=f"snips-{split.value}-{key}-{i}",
                    context=utterance,
                    candidates=candidates,
                    gold_index=gold,
                    split=split,
                    dataset=Dataset.snips,
                )
            )
            count += 1
        return count

    for key in intents:
        d = root / key
        published["train"] += add(d / f"train_{key}.json", key, Split.train)
        add(d / f"train_{key}_full.json", key, Split.validation)
        published["valid"] += add(d / f"validate_{key}.json", key, Split.test)

    stats = DatasetStats(
        train_size=published["train"],
        valid_size=published["valid"],
        test_size=0,
        num_intents=len(intents),
    )
    return instances, stats


def _load_fb(root: Path, dataset: Dataset) -> tuple[list[IntentInstance], DatasetStats]:
    lang = dataset.language.value
    files = {
        Split.train: root / f"train-{lang}.tsv",
        Split.validation: root / f"eval-{lang}.tsv",
        Split.test: root / f"test-{lang}.tsv",
    }
    _require_files(list(files.values()), dataset)

    candidates = tuple(sorted(FB_INTENTS.values()))
    instances: list[IntentInstance] = []
    sizes = {}
    for split, path in files.items():
        count = 0
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                cols = line.split("\t")
                if len(cols) < 3:
                    raise BenchmarkError(
                        f"{path}:{lineno}: expected >=3 tab-separated columns"
                    )
                label, utterance = cols[0], cols[2]
                if label not in FB_INTENTS:
                    raise BenchmarkError(
                        f"{path}:{lineno}: label {label!r} outside the known "
                        f"intent inventory"
                    )
                instances.append(
                    IntentInstance(
                        id=f"{dataset.value}-{split.value}-{count}",
                        context=utterance,
                        candidates=candidates,
                        gold_index=candidates.index(FB_INTENTS[label]),
                        split=split,
                        dataset=dataset,
                    )
                )
                count += 1
        sizes[split] = count

    stats = DatasetStats(
        train_size=sizes[Split.train],
        valid_size=sizes[Split.validation],
        test_size=sizes[Split.test],
        num_intents=len(FB_INTENTS),
    )
    return instances, stats


def _sgd_intent_text(intent: dict) -> str:
    # Schemas carry a short name and a readable description; the scorer
    # consumes text, so prefer the description.
    return intent.get("description") or intent["name"]


def _load_sgd(root: Path) -> tuple[list[IntentInstance], DatasetStats]:
    split_dirs = {
        Split.train: root / "train",
        Split.validation: root / "dev",
        Split.test: root / "test",
    }
    _require_files([d / "schema.json" for d in split_dirs.values()], Dataset.sgd)

    instances: list[IntentInstance] = []
    sizes = {}
    max_candidates = 0
    for split, d in split_dirs.items():
        schema = {
            svc["service_name"]: svc["intents"] for svc in _read_json(d / "schema.json")
        }
        dialogue_files = sorted(d.glob("dialogues_*.json"))
        if not dialogue_files:
            raise BenchmarkError(f"sgd: no dialogues_*.json files under {d}")
        count = 0
        for path in dialogue_files:
            for dialogue in _read_json(path):
                utterances: list[str] = []
                for turn_idx, turn in enumerate(dialogue["turns"]):
                    utterances.append(turn["utterance"])
                    if turn["speaker"] != "USER":
                        continue
                    frame = next(
                        (
                            f
                            for f in turn.get("frames", ())
                            if f.get("state", {}).get("active_intent", "NONE") != "NONE"
                        ),
                        None,
                    )
                    if frame is None:
                        continue  # no active service this turn
                    service = frame["service"]
                    intents = schema.get(service)
                    if intents is None:
                        raise BenchmarkError(
                            f"{path}: service {service!r} missing from schema.json"
                        )
                    candidates = tuple(_sgd_intent_text(it) for it in intents)
                    names = [it["name"] for it in intents]
                    active = frame["state"]["active_intent"]
                    if active not in names:
                        raise BenchmarkError(
                            f"{path}: intent {active!r} outside the schema of "
                            f"service {service!r}"
                        )
                    context = " ".join(utterances[-SGD_CONTEXT_WINDOW:])
                    instances.append(
                        IntentInstance(
                            id=f"sgd-{split.value}-{dialogue['dialogue_id']}-t{turn_idx}",
                            context=context,
                            candidates=candidates,
                            gold_index=names.index(active),
                            split=split,
                            dataset=Dataset.sgd,
                        )
                    )
                    max_candidates = max(max_candidates, len(candidates))
                    count += 1
        sizes[split] = count

    stats = DatasetStats(
        train_size=sizes[Split.train],
        valid_size=sizes[Split.validation],
        test_size=sizes[Split.test],
        num_intents=max_candidates,
    )
    return instances, stats


def load_benchmark(
    dataset: Dataset, root: str | Path
) -> tuple[list[IntentInstance], DatasetStats]:
    """All instances of one benchmark plus its published split statistics."""
    root = Path(root)
    if not root.is_dir():
        raise BenchmarkError(f"{dataset.value}: dataset root {root} does not exist")
    if dataset is Dataset.snips:
        return _load_snips(root)
    if dataset is Dataset.sgd:
        return _load_sgd(root)
    return _load_fb(root, dataset)


def subsample_training(
    instances: Sequence[IntentInstance], size: int, seed: int
) -> list[IntentInstance]:
    """Uniform sample without replacement, deterministic per (seed, size).

    Each size is drawn independently; subsamples of growing sizes are not
    nested.
    """
    if size > len(instances):
        raise ValueError(f"requested {size} examples from a split of {len(instances)}")
    if size < 0:
        raise ValueError("size must be non-negative")
    rng = random.Random(derive_seed(seed, str(size), "subsample"))
    return rng.sample(list(instances), size)


@dataclass(frozen=True)
class McqItem:
    """One multiple-choice record, the shape shared by the pretraining
    dataset and the cast benchmarks, so a single evaluator serves both."""

    id: str
    text: str
    candidates: tuple[str, ...]
    label: int

    @classmethod
    def from_instance(cls, inst: IntentInstance) -> "McqItem":
        return cls(inst.id, inst.context, inst.candidates, inst.gold_index)


def write_mcq(instances: Iterable[IntentInstance], fp: IO[str]) -> int:
    count = 0
    for inst in instances:
        rec = {
            "id": inst.id,
            "dataset": inst.dataset.value,
            "split": inst.split.value,
            "context": inst.context,
            "candidates": list(inst.candidates),
            "label": inst.gold_index,
        }
        fp.write(json.dumps(rec, ensure_ascii=False, separators=(",", ":")) + "\n")
        count += 1
    return count


def read_mcq(fp: IO[str]) -> list[McqItem]:
    """Read MCQ JSON-Lines; accepts both "context" and "step" text keys."""
    items: list[McqItem] = []
    for lineno, line in enumerate(fp, start=1):
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        text = rec.get("context", rec.get("step"))
        candidates = rec.get("candidates")
        label = rec.get("label")
        if text is None or not isinstance(candidates, list) or label is None:
            raise ValueError(f"line {lineno}: not a multiple-choice record")
        if not 0 <= label < len(candidates):
            raise ValueError(f"line {lineno}: label {label} out of range")
        items.append(
            McqItem(
                id=str(rec.get("id", lineno)),
                text=text,
                candidates=tuple(candidates),
                label=label,
            )
        )
    return items


def read_mcq_path(path: str | Path) -> list[McqItem]:
    with open(path, encoding="utf-8") as fh:
        return read_mcq(fh)
