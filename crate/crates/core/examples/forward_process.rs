//! Corrupt a clean sequence at several noise levels and take one reverse
//! step with a fixed prediction.

use maskdiff::noise::{corrupt, mixing_distribution, posterior_step, NoiseSchedule};
use maskdiff::types::{CategoricalGrid, TokenSequence, Vocabulary};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> maskdiff::Result<()> {
    let vocab = Vocabulary::synthetic(6)?;
    let schedule = NoiseSchedule::Linear;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = TokenSequence::new((0..24).map(|i| (i * 5) % 6).collect(), &vocab)?;
    println!("clean  {}", vocab.decode(x.ids()).join(" "));

    for t in [0.1, 0.5, 0.9] {
        let z = corrupt(&x, t, schedule, &vocab, &mut rng)?;
        let shown: Vec<&str> = (0..z.len()).map(|p| if z.is_masked(p) { "_" } else { vocab.token(z.ids()[p]) }).collect();
        println!(
            "t={t:<4} alpha={:.2} weight={:>5.2} masked {:>2}/24  {}",
            schedule.alpha(t),
            schedule.loss_weight(t),
            z.masked_count(),
            shown.join(" ")
        );
    }

    let z = corrupt(&x, 1.0, schedule, &vocab, &mut rng)?;
    let mut row = vec![0.0; vocab.size()];
    row[0] = 0.7;
    row[1] = 0.3;
    let grid = CategoricalGrid::new(vec![row.clone(); z.len()], &vocab)?;
    let c = schedule.unmask_probability(1.0, 0.75)?;
    println!("\nreverse step 1.0 -> 0.75: unmask probability {c}");
    println!("mixing vector {:?}", mixing_distribution(&row, c, vocab.mask_id()));
    let s = posterior_step(&z, 0.75, &grid, schedule, &mut rng)?;
    println!("revealed {} of {} positions", z.len() - s.masked_count(), z.len());
    Ok(())
}
