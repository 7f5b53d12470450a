from setuptools import find_packages, setup

setup(
    name="asrc",
    version="0.1",
    package_dir={"": "src"},
    packages=find_packages(where="src", include=["asrc", "asrc.*"]),
    install_requires=[
        "numpy",
        "scikit-learn",
        "scipy",
        "sqlalchemy>=1.4,<2",
        "tenacity",
    ],
    entry_points={"console_scripts": ["asrc=asrc.entrypoints.cli:main"]},
)
