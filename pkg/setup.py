import re
import sys
from pathlib import Path
from setuptools import find_packages, setup

NEEDS_PYTEST = {'pytest', 'test', 'ptr'}.intersection(sys.argv)
PYTEST_RUNNER = ['pytest-runner'] if NEEDS_PYTEST else []

ROOT_PATH = Path(__file__).parent

README_PATH = ROOT_PATH / 'README.rst'

REQUIREMENT_PATH = ROOT_PATH / 'requirement'

REQUIREMENTS_MAIN_PATH = REQUIREMENT_PATH / 'main.txt'

REQUIREMENTS_EXT_PATH = REQUIREMENT_PATH / 'include' / 'ext.txt'

REQUIREMENTS_TEST_PATH = REQUIREMENT_PATH / 'test.txt'


def stream_requirements(fd):
    """For a given requirements file descriptor, generate lines of
    distribution requirements, ignoring comments and chained requirement
    files.

    """
    for line in fd:
        cleaned = re.sub(r'#.*$', '', line).strip()
        if cleaned and not cleaned.startswith('-r'):
            yield cleaned


def read_requirements(path):
    with path.open() as fd:
        return list(stream_requirements(fd))


REQUIREMENTS_MAIN = read_requirements(REQUIREMENTS_MAIN_PATH)

REQUIREMENTS_EXT = read_requirements(REQUIREMENTS_EXT_PATH)

REQUIREMENTS_TEST = read_requirements(REQUIREMENTS_TEST_PATH)


setup(
    name='textmap',
    version='0.1.0',
    description="Text localization maps for document images",
    long_description=README_PATH.read_text(),
    long_description_content_type='text/x-rst',
    author="Center for Data Science and Public Policy",
    author_email='datascifellows@gmail.com',
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'Natural Language :: English',
        'Programming Language :: Python :: 3',
        'Topic :: Scientific/Engineering :: Image Recognition',
    ],
    python_requires='>=3.9',
    package_dir={'': 'src'},
    packages=find_packages('src'),
    install_requires=REQUIREMENTS_MAIN,
    extras_require={
        'plot': REQUIREMENTS_EXT,
    },
    entry_points={
        'console_scripts': [
            'textmap=textmap.cli:main',
        ],
    },
    setup_requires=PYTEST_RUNNER,
    tests_require=REQUIREMENTS_TEST + REQUIREMENTS_EXT,
)
