from setuptools import setup, find_packages

setup(
    name="hlseg",
    version="0.1.0",
    packages=find_packages(exclude=["tests", "tests.*"]),
    python_requires=">=3.9",
    install_requires=[
        'numpy>=1.24',
        'scipy>=1.10',
        'Pillow>=10.0',
        'pandas>=2.0',
        'PyYAML>=5.4.1',
        'jsonschema>=4.19',
        'rich>=13.5',
        'colorama>=0.4.6',
    ],
    entry_points={
        'console_scripts': [
            'hlseg=hlseg.main:main'
        ]
    }
)
