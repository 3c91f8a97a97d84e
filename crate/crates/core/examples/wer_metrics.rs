use maskdiff::eval::{rtfx, wer, CorpusWer};

fn main() -> maskdiff::Result<()> {
    let pairs: [(&[&str], &[&str]); 3] = [
        (&["the", "cat", "sat"], &["the", "cat"]),
        (&["a", "b", "c"], &["a", "x", "c"]),
        (&["one", "two", "three", "four", "five", "six"], &["one", "two", "three", "four", "five", "six"]),
    ];
    let mut corpus = CorpusWer::default();
    for (r, h) in pairs {
        println!("{:<30} {:<30} wer {:.3}", r.join(" "), h.join(" "), wer(r, h)?);
        corpus.add(r, h)?;
    }
    println!("corpus wer {:.3} ({} errors / {} words)", corpus.wer(), corpus.errors, corpus.reference_tokens);
    println!("10 s decoded in 2 s: rtfx {}", rtfx(10.0, 2.0)?);
    Ok(())
}
