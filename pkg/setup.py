from setuptools import setup, find_packages

with open("requirements.txt") as f:
    requirements = f.read().splitlines()

setup(
    name="qkalman",
    version="0.1.0",
    packages=find_packages(exclude=["tests"]),
    package_data={"qkalman": ["corpus/*.json", "corpus/*.yaml"]},
    install_requires=requirements,
    entry_points={
        "console_scripts": [
            "qkalman=qkalman.cli:main",
        ],
    },
    author="Quantum Control Team",
    description="Kalman decomposition of linear quantum systems",
    python_requires=">=3.8",
)
