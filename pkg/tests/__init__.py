"""Test suite for browser-flow-backend."""
