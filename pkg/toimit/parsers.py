# toimit/parsers.py - reads YAML documents (model files, task ranges, run configs) into schemas
import logging
import re
from pathlib import Path
from typing import Any, Dict, Optional, Type, TypeVar

import yaml
from pydantic import BaseModel, ValidationError

from toimit import schemas
from toimit.errors import ConfigError


logger = logging.getLogger(__name__)

T = TypeVar("T", bound=BaseModel)

HEADER_PATTERN = re.compile(r"^#\s*toimit-(?P<kind>[a-z]+)\s+v(?P<version>\d+)\s*$")
SUPPORTED_VERSIONS = {"model": 1, "config": 1}
MAX_REPORTED_ERRORS = 20


def read_header(text: str) -> Optional[Dict[str, Any]]:
    """Return {'kind', 'version'} from a `# toimit-<kind> v<N>` first line, or None."""
    first_line = text.lstrip("\ufeff").split("\n", 1)[0].strip()
    match = HEADER_PATTERN.match(first_line)
    if not match:
        return None
    return {"kind": match.group("kind"), "version": int(match.group("version"))}


def check_header(text: str, kind: str, source: str, required: bool) -> None:
    """
    Validate the versioned header line of a document.

    Args:
        text: Raw document text
        kind: Expected header kind ('model' or 'config')
        source: Name used in error messages
        required: Whether a missing header is an error

    Raises:
        ConfigError: If the header is missing (when required), names another kind,
            or carries an unsupported version
    """
    header = read_header(text)
    if header is None:
        if required:
            raise ConfigError(f"{source}: missing '# toimit-{kind} v{SUPPORTED_VERSIONS[kind]}' header line")
        return

    if header["kind"] != kind:
        raise ConfigError(f"{source}: expected a toimit-{kind} document, found toimit-{header['kind']}")
    if header["version"] != SUPPORTED_VERSIONS[kind]:
        raise ConfigError(
            f"{source}: unsupported toimit-{kind} version v{header['version']} "
            f"(this build reads v{SUPPORTED_VERSIONS[kind]})"
        )


def format_validation_error(error: ValidationError, source: str) -> str:
    """Flatten a pydantic error into one `field: message` line per problem."""
    lines = []
    for item in error.errors():
        field = ".".join(str(part) for part in item["loc"]) if item["loc"] else "document"
        lines.append(f"{field}: {item['msg']}")

    return (
        f"{source} validation failed ({len(lines)} error(s)):\n"
        + "\n".join(lines[:MAX_REPORTED_ERRORS])
    )


def validate_document(schema: Type[T], data: Any, source: str) -> T:
    """Validate a parsed mapping against a schema, raising ConfigError on failure."""
    if data is None:
        raise ConfigError(f"{source}: document is empty")
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: expected a mapping at the top level, found {type(data).__name__}")

    try:
        return schema.model_validate(data)
    except ValidationError as e:
        raise ConfigError(format_validation_error(e, source)) from e


def load_yaml(path: Path, kind: str, required_header: bool = False) -> Any:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"File not found: {path}")

    text = path.read_text(encoding="utf-8")
    check_header(text, kind, str(path), required_header)

    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: not valid YAML ({e})") from e


def load_model_doc(path: Path) -> schemas.RobotModelDoc:
    """Parse a robot model file. The `# toimit-model v1` header is mandatory."""
    data = load_yaml(path, "model", required_header=True)
    doc = validate_document(schemas.RobotModelDoc, data, str(path))
    logger.debug(f"Loaded model '{doc.name}' from {path} ({len(doc.bodies)} bodies)")
    return doc


def load_task_library(path: Path) -> schemas.TaskLibraryDoc:
    data = load_yaml(path, "config")
    return validate_document(schemas.TaskLibraryDoc, data, str(path))


def load_config(path: Path, schema: Type[T], overrides: Optional[Dict[str, Any]] = None) -> T:
    """
    Parse a run config file into `schema`, applying flag overrides on top.

    Args:
        path: YAML config path
        schema: Target pydantic model
        overrides: Top-level keys from command-line flags; None values are ignored

    Returns:
        Validated schema instance
    """
    data = load_yaml(path, "config") or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at the top level")

    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value

    return validate_document(schema, data, str(path))
