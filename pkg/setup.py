from setuptools import setup, find_packages
PACKAGES = find_packages()

# read the contents of your README file
from os import path
this_directory = path.abspath(path.dirname(__file__))
with open(path.join(this_directory, 'README.md'), encoding='utf-8') as f:
    long_description = f.read()

opts = dict(name='gluskabi',
            description='Maximally persistent transitions (raccordations) between signals and along linear dynamics',
            long_description=long_description,
            long_description_content_type='text/markdown',
            license='MIT',
            version='0.1.1',
            packages=PACKAGES,
            python_requires='>=3.8',
            entry_points={'console_scripts': ['gluskabi=gluskabi.cli:main']}
           )

install_reqs = [
      'numpy>=1.20',
      'pandas>=1.5',
      'feather-format>=0.4.1',
      'scipy>=1.9']

test_reqs = [
      'pytest',
      'sympy']

if __name__ == "__main__":
      setup(**opts, install_requires=install_reqs, extras_require={'test': test_reqs})
