// SPDX-License-Identifier: MIT OR Apache-2.0

//! Holds the `acceptance` test target; the library itself is empty.
