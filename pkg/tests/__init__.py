"""Test suite for File Organizer."""
