from setuptools import setup, find_packages

import sys


if sys.version_info < (3, 8):
    sys.exit('Sorry, Python < 3.8 is not supported')

with open("README.md", "r") as fh:
    long_description = fh.read()

setup(
    name='crash-surrogate',
    version='0.1.0',
    description='Autoregressive hybrid mesh-attention crash surrogates with a lattice ground-truth oracle',
    long_description=long_description,
    long_description_content_type="text/markdown",
    python_requires=">=3.8",
    packages=find_packages(),  # same as name
    install_requires=[
        'joblib>=1.1.0',
        'psutil>=5.5.1',
        'numpy>=1.22.3',
        'pandas>=1.4.2',
        'tqdm>=4.64.0',
        'pyyaml>=5.3.1',
        'appdirs>=1.4.4',
        'cleo>=0.8.1,<1.0',
        'clikit>=0.6.2,<0.7',
        'scipy>=1.8.0',
        'matplotlib>=3.5.0',
    ],
    entry_points={
        'console_scripts': [
            'crashsurrogate=crashsurrogate.cli.crashsurrogate:run',
        ],
    },
)
