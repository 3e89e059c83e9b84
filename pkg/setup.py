"""Setup configuration for the L-TAE toolkit."""

from setuptools import setup, find_packages

setup(
    name="ltae-toolkit",
    version="0.1.0",
    description="Lightweight temporal attention encoders, training loop and cost accounting",
    packages=find_packages(exclude=["tests", "tests.*"]),
    python_requires=">=3.8",
    install_requires=[
        "click>=8.1.0",
        "hypothesis>=6.92.0",
        "numpy>=1.22.0",
        "pandas>=1.4.0",
        "pytest>=7.4.0",
        "PyYAML>=6.0.0",
    ],
    entry_points={
        "console_scripts": [
            "ltae=src.cli:main",
        ],
    },
)
