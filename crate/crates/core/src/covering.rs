//! Unramified cyclic double covers (under construction).
