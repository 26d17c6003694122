#!/usr/bin/env python3
from setuptools import setup

setup(
    name="gnp-triangle-llt",
    version="0.1.0",
    packages=["src"],
    install_requires=[
        "duckdb>=0.8.1",
        "pandas>=2.0.0",
        "pydantic>=2.0",
        "numpy>=2.0",
        "scipy>=1.11",
        "click>=8.1",
    ],
    entry_points={"console_scripts": ["gnp-llt=src.cli:main"]},
    python_requires=">=3.10",
)
