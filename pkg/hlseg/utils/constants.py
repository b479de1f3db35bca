# Error kind constants carried by HLSegError and printed in CLI messages
SHAPE_MISMATCH = "SHAPE_MISMATCH"
INVALID_PARAMETER = "INVALID_PARAMETER"
MISSING_TENSOR = "MISSING_TENSOR"
BAD_FORMAT = "BAD_FORMAT"
CORRUPT_FILE = "CORRUPT_FILE"
DOMAIN_ERROR = "DOMAIN_ERROR"

# CLI exit codes
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MODEL_FILES = 2
EXIT_PROCESSING = 3
