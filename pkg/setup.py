from setuptools import setup

with open("README.md") as f:
    long_description = f.read()

setup(
    name="doc2eg",
    version="0.1.0",
    packages=["doc2eg"],
    package_data={"doc2eg": ["templates/*.txt"]},
    url="https://github.com/doc2eg/doc2eg",
    license="MIT",
    description="Generate salient event relation graphs from documents with LLMs",
    long_description=long_description,
    long_description_content_type="text/markdown",
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    keywords="event graphs llm information extraction",
    install_requires=[
        "rich-argparse==1.0.0",
        "rich==13.0.1",
        "mistune==0.8.4",
        "chardet==5.1.0",
        "requests==2.31.0",
        "PyYAML==6.0.1",
        "networkx==3.1",
        "numpy==1.24.4",
        "scipy==1.10.1",
    ],
    extras_require={"nltk": ["nltk==3.8.1"]},
    python_requires=">=3.8",
    entry_points={"console_scripts": ["doc2eg=doc2eg.__main__:main"]},
)
