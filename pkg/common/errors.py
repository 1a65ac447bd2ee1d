# Process exit codes
EXIT_OK = 0
EXIT_NUMERICAL_FAILURE = 1
EXIT_USAGE_ERROR = 2
