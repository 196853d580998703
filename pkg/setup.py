import setuptools

setuptools.setup(
    name="rns_ckks_tools",
    version="0.1",
    description="RNS-CKKS kernels, H-(I)DFT schedules and an analytic bootstrapping cost model",
    packages=["controllers", "repositories", "services", "utils"],
    py_modules=["main"],
    classifiers=["Programming Language :: Python :: 3", "Operating System :: OS Independent"],
    python_requires=">=3.10",
    install_requires=[
        "loguru",
        "numpy",  # Limb vectors and slot-domain linear algebra
        "sympy",  # Primality testing for NTT-friendly primes
    ],
    entry_points={"console_scripts": ["rns-ckks=main:main"]},
)
