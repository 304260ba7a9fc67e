# makes tests/ importable so test modules can `import oracles`
