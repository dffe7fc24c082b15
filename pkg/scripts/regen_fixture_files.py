#!/usr/bin/env python3
"""Rewrite the shipped mechanism files from the in-code catalog."""

from redistrib.fixtures import write_fixture_files

if __name__ == "__main__":
    for path in write_fixture_files():
        print(path)
