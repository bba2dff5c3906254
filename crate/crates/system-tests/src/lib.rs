//! Holds the `acceptance` test target, which exercises `shadow-core` end to
//! end and prints one verdict line per criterion. Run it with
//! `cargo test -p shadow-system-tests --test acceptance`.
