"""Builds the `confocal` extension module by delegating to cargo.

The extension lives in crates/confocal-py as an ordinary cdylib; this
shim compiles it in release mode and copies the shared object to
wherever setuptools expects the extension, so `pip install -e .
--no-build-isolation` works without any Rust-specific build backend.
"""

import shutil
import subprocess
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CargoExtension(Extension):
    def __init__(self, name: str, crate: str):
        super().__init__(name, sources=[])
        self.crate = crate


class CargoBuildExt(build_ext):
    def build_extension(self, ext: CargoExtension) -> None:
        root = Path(__file__).resolve().parent
        subprocess.run(
            ["cargo", "build", "--release", "-p", ext.crate],
            cwd=root,
            check=True,
        )
        built = root / "target" / "release" / f"lib{ext.name}.so"
        if not built.exists():
            raise FileNotFoundError(f"cargo did not produce {built}")
        target = Path(self.get_ext_fullpath(ext.name))
        target.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(built, target)


setup(
    ext_modules=[CargoExtension("confocal", crate="confocal-py")],
    cmdclass={"build_ext": CargoBuildExt},
)
