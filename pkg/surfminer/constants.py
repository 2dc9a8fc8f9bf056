READ_CHUNK_SIZE = 64 * 1024
FIELD_SEPARATOR = "\t"
STORE_FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"

MAC_PATTERN = r"^[0-9A-F]{2}(?:-[0-9A-F]{2}){5}$"
ZERO_MAC = "00-00-00-00-00-00"

DEFAULT_ALLOWED_SCHEMES = ("http", "ftp")
DEFAULT_LOCAL_HOSTS = ("localhost", "127.0.0.1")

DEFAULT_TERMINATION_MODE = 3
# a window silent this long is treated as a new window when it navigates again
DEFAULT_REOPEN_GAP_MS = 4 * 3600 * 1000
DEFAULT_MIN_VISIT_MS = 20000
DEFAULT_MAX_VISIT_MS = 1800000
DEFAULT_ERROR_TITLE_PATTERNS = ("404", "not found", "error", "erreur")
DEFAULT_TITLE_DISTANCE = 3

DEFAULT_PERIOD_HOURS = (6, 12, 18)  # morning, afternoon, night start hours
DEFAULT_PAGES_PER_VECTOR = 2
URL_CODE_PAD = -1

DEFAULT_GRID = (3, 3)
DEFAULT_EPOCHS = 100
DEFAULT_ALPHA0 = 0.5
SIGMA_FLOOR = 0.5

DEFAULT_TOP_N = 10
OUTPUT_ENV_VAR = "SURFMINER_OUT"

parse_error_reasons = {
    "field_count": "Malformed field count",
    "event_code": "Unknown event code",
    "timestamp": "Invalid date or time",
    "integer": "Invalid integer field",
}

stage_names = (
    "ingest",
    "clean",
    "sessionize",
    "refine",
    "features",
    "cluster",
    "report",
)
