from setuptools import setup, find_packages

setup(
    name="locklab",
    version="0.1.0",
    description="Multiparty quantum information locking: certificates, LOCC protocols and entanglement costs",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    license="MIT",
    packages=find_packages(exclude=["tests", "examples", "examples.*"]),
    include_package_data=True,
    install_requires=[
        "numpy>=1.24",
        "pydantic>=2.10.4",
        "json-log-formatter",
    ],
    classifiers=[
        "Programming Language :: Python :: 3.11",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.9",
    entry_points={
        "console_scripts": [
            "locklab=lockutils.main:main",
        ],
    },
)
