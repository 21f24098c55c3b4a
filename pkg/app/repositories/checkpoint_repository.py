"""Repository for versioned model checkpoints (numpy ``.npz`` containers)."""

import json
import logging
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Union

import numpy as np
from pydantic import ValidationError

from app.core.errors import CheckpointError
from app.models.model_config import ModelConfig
from app.services.forecaster import Forecaster
from app.services.graph_learning import CandidateMatrix, SignificantIndexSet
from app.services.optimizer import Adam
from app.services.windows import Scaler

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    model: Forecaster
    optimizer: Adam
    iteration: int


class CheckpointRepository:
    """Saves and restores a forecaster with its optimizer state.

    Layout: ``meta`` (JSON: format_version, config, iteration, lr, step
    count), ``param/<id>``, ``adam_m/<id>``, ``adam_v/<id>``, ``index_set``,
    ``candidates`` (absent when every node is a neighbor), ``topology`` (only
    for the topology variant) and ``scaler``.
    """

    def save(self, path: PathLike, model: Forecaster, optimizer: Adam, iteration: int) -> Path:
        """Write a checkpoint.

        Args:
            path: Destination file (written as-is, no suffix added)
            model: Forecaster to store
            optimizer: Its optimizer
            iteration: Iterations completed

        Returns:
            The written path
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        meta = {
            "format_version": FORMAT_VERSION,
            "config": model.config.model_dump(mode="json"),
            "iteration": int(iteration),
            "lr": float(optimizer.lr),
            "step_count": int(optimizer.step_count),
        }
        arrays: Dict[str, np.ndarray] = {"meta": np.array(json.dumps(meta))}
        for pid, param in model.named_parameters().items():
            arrays[f"param/{pid}"] = param.data
        for pid, moment in optimizer.first_moment.items():
            arrays[f"adam_m/{pid}"] = moment
        for pid, moment in optimizer.second_moment.items():
            arrays[f"adam_v/{pid}"] = moment
        arrays["index_set"] = model.index_set.ids
        if model.candidates is not None:
            arrays["candidates"] = model.candidates.ids
        if model.topology is not None:
            arrays["topology"] = model.topology
        arrays["scaler"] = np.array([model.scaler.mean, model.scaler.std])

        with path.open("wb") as handle:
            np.savez(handle, **arrays)
        logger.info("Saved checkpoint %s at iteration %d", path, iteration)
        return path

    def load(self, path: PathLike) -> Checkpoint:
        """Read a checkpoint written by :meth:`save`.

        Raises:
            CheckpointError: If the file is missing, corrupt, from another
                format version or inconsistent with its own configuration
        """
        path = Path(path)
        try:
            with np.load(path, allow_pickle=False) as archive:
                contents = {key: archive[key] for key in archive.files}
            meta = json.loads(str(contents["meta"]))
        except (OSError, ValueError, KeyError, zipfile.BadZipFile, EOFError) as exc:
            raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from exc

        if meta.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(
                f"{path}: format version {meta.get('format_version')!r}, expected {FORMAT_VERSION}"
            )
        try:
            return self._restore(meta, contents)
        except (KeyError, ValueError, ValidationError) as exc:
            raise CheckpointError(f"{path}: checkpoint does not match its configuration ({exc})") from exc

    def _restore(self, meta: Dict, contents: Dict[str, np.ndarray]) -> Checkpoint:
        config = ModelConfig.model_validate(meta["config"])
        mean, std = (float(v) for v in contents["scaler"])
        model = Forecaster.create(config, Scaler(mean=mean, std=std), contents.get("topology"))

        for pid, param in model.named_parameters().items():
            stored = contents[f"param/{pid}"]
            if stored.shape != param.shape:
                raise ValueError(f"parameter {pid} has shape {stored.shape}, expected {param.shape}")
            param.data[...] = stored

        index_set = SignificantIndexSet(contents["index_set"])
        index_set.validate_for(config.num_nodes)
        model.index_set = index_set
        if model.candidates is not None:
            model.candidates = CandidateMatrix(contents["candidates"])

        optimizer = Adam(model.parameters(), lr=meta["lr"], clip_norm=config.clip_norm)
        optimizer.load_state_dict(
            {
                "lr": meta["lr"],
                "step_count": meta["step_count"],
                "first_moment": {p.id: contents[f"adam_m/{p.id}"] for p in optimizer.params},
                "second_moment": {p.id: contents[f"adam_v/{p.id}"] for p in optimizer.params},
            }
        )
        return Checkpoint(model=model, optimizer=optimizer, iteration=int(meta["iteration"]))


__all__ = ["FORMAT_VERSION", "Checkpoint", "CheckpointRepository"]
