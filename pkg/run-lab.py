#!/usr/bin/env python3
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

"""Run a loylab action from a pinned virtualenv.

The first invocation creates ``build/venv`` and installs
``requirements.txt`` into it; later invocations reuse it until the
requirements change. Arguments are passed to ``loylab.cli`` unchanged and
its exit code (0 success, 1 configuration error, 2 numerical failure) is
the exit code of this script.
"""

import os
import pathlib
import subprocess
import sys
import venv

ROOT = pathlib.Path(os.path.abspath(__file__)).parent
BUILD = ROOT / "build"
VENV = BUILD / "venv"
PIP = VENV / "bin" / "pip"
PYTHON = VENV / "bin" / "python"
REQUIREMENTS = ROOT / "requirements.txt"
# Copy of the requirements the venv was last populated from.
INSTALLED = VENV / "loylab-requirements.txt"


def venv_is_current():
    if not PYTHON.exists() or not INSTALLED.exists():
        return False

    return INSTALLED.read_bytes() == REQUIREMENTS.read_bytes()


def bootstrap():
    BUILD.mkdir(exist_ok=True)

    if not venv_is_current():
        venv.create(VENV, with_pip=True, symlinks=True)
        subprocess.run([str(PIP), "install", "-r", str(REQUIREMENTS)], check=True)
        INSTALLED.write_bytes(REQUIREMENTS.read_bytes())

    os.environ["LOYLAB_BOOTSTRAPPED"] = "1"
    os.environ["PATH"] = "%s:%s" % (str(VENV / "bin"), os.environ["PATH"])
    os.environ["PYTHONPATH"] = str(ROOT)
    os.environ["PYTHONUNBUFFERED"] = "1"

    args = [str(PYTHON), __file__, *sys.argv[1:]]

    os.execv(str(PYTHON), args)


def run():
    from loylab.cli import main

    return main(sys.argv[1:])


if __name__ == "__main__":
    try:
        if "LOYLAB_BOOTSTRAPPED" not in os.environ:
            bootstrap()
        else:
            sys.exit(run())
    except subprocess.CalledProcessError as e:
        sys.exit(e.returncode)
