"""Fault-tolerant multiparty session global types."""
