# Library, synthetic-oracle and command-line tests
