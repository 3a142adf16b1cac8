pad_token = "<pad>"
bos_token = "<s>"
eos_token = "</s>"
unk_token = "<unk>"

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
UNK_ID = 3
special_tokens = [pad_token, bos_token, eos_token, unk_token]

manifest_file_name = "run_manifest.json"
report_file_name = "train_report.json"
checkpoint_file_name = "model.pt"
