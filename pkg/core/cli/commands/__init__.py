# This file is intentionally left blank to mark the directory as a Python package
