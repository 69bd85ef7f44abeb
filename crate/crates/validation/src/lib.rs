//! Hosts the `acceptance` test target; no library code.
