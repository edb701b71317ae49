from setuptools import setup

setup(
    name="fpklab",
    version="0.1.0",
    description="Численная лаборатория нелинейных уравнений Фоккера-Планка-Колмогорова",
    python_requires=">=3.10",
    packages=[
        "config", "database", "measures", "drift", "invariants", "solvers",
        "analysis", "particles", "scenarios", "utils",
    ],
    py_modules=["main"],
    package_data={"scenarios": ["examples/*.toml"]},
    install_requires=[
        "numpy>=1.26",
        "scipy>=1.11",
        "sqlalchemy>=2.0",
        "python-dotenv>=1.0",
        "tomli>=2.0; python_version < '3.11'",
    ],
    extras_require={"test": ["pytest>=7.4"]},
    entry_points={"console_scripts": ["fpklab=main:main"]},
)
