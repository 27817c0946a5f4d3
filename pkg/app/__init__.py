# app package initialization
# Keep this file minimal to avoid circular imports
