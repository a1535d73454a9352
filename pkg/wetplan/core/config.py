import os

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

CONFIG_DIR = os.environ.get("WET_CONFIG_DIR", "scenarios")
LOG_LEVEL = os.environ.get("WET_LOG_LEVEL", "INFO")

# Selections joint_optimize may score before it stops searching
SEARCH_BUDGET = int(os.environ.get("WET_SEARCH_BUDGET", "2000"))
# Branch-and-bound nodes per route before the best tour is returned as suboptimal
NODE_BUDGET = int(os.environ.get("WET_NODE_BUDGET", "1000000"))

FORMAT_VERSION = 1
