namespace cabledyn {}
