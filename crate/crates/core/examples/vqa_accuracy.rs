//! Leave-one-out VQA accuracy, with answer normalization and the per-type
//! breakdown.
//!
//! cargo run --example vqa_accuracy

use ragvl::metrics::{item_accuracy, vqa_accuracy, QuestionType, VqaItem, VqaNormalizer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ten = |yes: usize, other: &str| -> Vec<String> {
        (0..10).map(|i| if i < yes { "2".to_owned() } else { other.to_owned() }).collect()
    };
    // item_accuracy compares raw strings, so normalize first ("two" -> "2").
    let norm = VqaNormalizer::standard();
    let predicted = norm.normalize("two");
    for matches in [0, 1, 2, 3, 4, 10] {
        let answers: Vec<String> = ten(matches, "three").iter().map(|a| norm.normalize(a)).collect();
        println!("{matches:>2} of 10 annotators agree -> {:.3}", item_accuracy(&predicted, &answers));
    }

    let items = vec![
        VqaItem::new("q1", "Two", &ten(10, "3"), QuestionType::Number)?,
        VqaItem::new("q2", "yes", &["yes"; 10], QuestionType::YesNo)?,
        VqaItem::new("q3", "a red car", &["red car", "red car", "red", "red", "car", "red car", "red", "red car", "red", "red"], QuestionType::Other)?,
    ];
    let report = vqa_accuracy(&items)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
