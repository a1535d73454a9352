import csv
import logging
import os
from pathlib import Path
from typing import Sequence, Type, TypeVar

from pydantic import BaseModel, ValidationError

from .config import CONFIG_DIR
from .errors import ScenarioError

logger = logging.getLogger(__name__)

Document = TypeVar("Document", bound=BaseModel)


def resolve_path(path: str) -> Path:
    """Return ``path`` as given, or under the default config directory."""
    candidate = Path(path)
    if candidate.exists():
        return candidate
    fallback = Path(CONFIG_DIR) / path
    if fallback.exists():
        return fallback
    raise ScenarioError(f"File not found: {path} (also looked in {CONFIG_DIR})")


def ensure_dir(path: str) -> Path:
    os.makedirs(path, exist_ok=True)
    return Path(path)


def describe_error(error: dict) -> str:
    location = ".".join(str(part) for part in error.get("loc", ()))
    if location:
        return f"{location}: {error['msg']}"
    return error["msg"]


def validation_details(error: ValidationError) -> str:
    return "; ".join(describe_error(err) for err in error.errors())


def load_document(path: str, model: Type[Document]) -> Document:
    resolved = resolve_path(path)
    try:
        text = resolved.read_text()
    except OSError as e:
        raise ScenarioError(f"Cannot read {resolved}: {e}")
    try:
        return model.model_validate_json(text)
    except ValidationError as e:
        # json_invalid errors already carry "line L column C"
        raise ScenarioError(f"{resolved}: {validation_details(e)}")


def save_document(path, document: BaseModel) -> Path:
    target = Path(path)
    if target.parent != Path(""):
        ensure_dir(str(target.parent))
    target.write_text(document.model_dump_json(indent=2) + "\n")
    logger.debug("wrote %s", target)
    return target


def save_text(path, text: str) -> Path:
    target = Path(path)
    if target.parent != Path(""):
        ensure_dir(str(target.parent))
    target.write_text(text)
    return target


def save_csv(path, header: Sequence[str], rows: Sequence[Sequence[float]]) -> Path:
    target = Path(path)
    if target.parent != Path(""):
        ensure_dir(str(target.parent))
    with target.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows([[repr(float(value)) for value in row] for row in rows])
    return target
