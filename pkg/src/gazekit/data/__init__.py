"""Packaged data files: cascade models and evaluation fixtures."""

from importlib import resources


def data_path(relative: str):
    """Filesystem path of a packaged data file, e.g. data_path("models/rig_face.xml")."""
    root = resources.files(__name__)
    path = root.joinpath(relative)
    if not path.is_file():
        raise FileNotFoundError(f"no packaged data file {relative!r}")
    return path
