"""Property-based tests for File Organizer."""
