import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Pick the settings flavour
QUICLENS_ENV = os.getenv("QUICLENS_ENV", "development")

if QUICLENS_ENV == "production":
    from .production import *
else:
    from .development import *
