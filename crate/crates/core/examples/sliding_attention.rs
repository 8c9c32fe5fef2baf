//! Prints the key lists of a sliding-window mask with one global token and
//! compares its size with full attention.

use storyer::neural::AttentionMask;

fn main() {
    let len = 12;
    let mut global = vec![false; len];
    global[0] = true;
    let mut valid = vec![true; len];
    valid[len - 1] = false;

    let mask = AttentionMask::sliding_window(2, &global, &valid);
    for q in 0..mask.q_len() {
        println!("query {q:>2} -> {:?}", mask.keys(q));
    }
    let full = AttentionMask::full(len, &valid);
    println!("window nnz {} vs full nnz {}", mask.nnz(), full.nnz());
}
