from setuptools import setup, find_packages

with open("requirements.txt") as f:
    requirements = [line for line in f.read().splitlines() if line and not line.startswith("#")]

setup(
    name="vqddm",
    version="0.1.0",
    description="Vector-quantized discrete diffusion toolkit",
    packages=find_packages(exclude=("tests", "tests.*")),
    install_requires=requirements,
    entry_points={"console_scripts": ["vqddm=src.main:main"]},
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Programming Language :: Python :: 3.9",
    ],
    python_requires=">=3.9",
)
