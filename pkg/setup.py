"""
Setup configuration for shs-adversarial-bench package.
"""
from setuptools import setup, find_packages
from pathlib import Path

# Read the long description from README
this_directory = Path(__file__).parent
long_description = (this_directory / "README.md").read_text()

# Read version from version.py
version = {}
with open(this_directory / "shs_bench" / "version.py") as f:
    exec(f.read(), version)

setup(
    name="shs-adversarial-bench",
    version=version["__version__"],
    description="Adversarial attack benchmark for a machine-learning smart healthcare system",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests", "examples", "docs", "configs"]),
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "Topic :: Security",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.8",
    install_requires=[
        "pandas>=1.5.0",
        "numpy>=1.20.0",
        "pyyaml>=5.4",
        "tqdm>=4.60.0",
    ],
    extras_require={
        "dev": [
            "pytest>=6.2.0",
            "pytest-cov>=2.12.0",
            "hypothesis>=6.0.0",
            "black>=21.0",
            "flake8>=3.9.0",
        ],
    },
    entry_points={
        "console_scripts": [
            "shs-bench=shs_bench.cli:main",
        ],
    },
    package_data={},
    include_package_data=True,
    keywords="adversarial machine-learning healthcare iot poisoning evasion benchmark",
)
