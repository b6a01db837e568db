"""Setup script for LGL Collocation."""

from setuptools import setup, find_packages
from pathlib import Path

# Read README for long description
readme_file = Path(__file__).parent / "README.md"
long_description = readme_file.read_text() if readme_file.exists() else ""

setup(
    name="lgli-collocation",
    version="1.0.0",
    description="Integral-form Legendre-Gauss-Lobatto collocation for optimal control",
    long_description=long_description,
    long_description_content_type="text/markdown",
    author="LGL Collocation Team",
    packages=find_packages(exclude=["tests", "examples", "examples.*"]),
    py_modules=["app", "run"],
    install_requires=[
        "numpy>=1.22.0",
        "scipy>=1.8.0",
    ],
    python_requires=">=3.9",
    entry_points={
        "console_scripts": [
            "lgli=app:main",
        ],
    },
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
)
